#!/usr/bin/env python
"""Patch-grid coordinate system shared by every pyarti module.

A PatchGrid is the h_p x w_p lattice a diffusion transformer imposes on an
image.  Coordinates are 0-based (row, col) pairs, linear indices are
row-major.  Patch sets are plain frozensets of PatchCoord; set geometry
runs on (n, 2) int coordinate arrays.
"""

__author__ = "pyarti developers"
__date__ = "18 October 2026"

from dataclasses import dataclass
from typing import FrozenSet, Iterable, NamedTuple, Tuple

import numpy as np

TOOLS = ("add", "remove", "distort", "fuse")
TOOL_ARTIFACT_TYPES = {"add": "duplication", "remove": "omission",
					   "distort": "distortion", "fuse": "fusion"}


class GridException(Exception):
	"""Represents an invalid grid, coordinate or mapping."""
	def __init__(self, value):
		self.param = value
	def __str__(self):
		return repr(self.param)


class PatchCoord(NamedTuple):
	row: int
	col: int


class BBox(NamedTuple):
	"""Half-open pixel rectangle [x_min, x_max) x [y_min, y_max)."""
	x_min: int
	y_min: int
	x_max: int
	y_max: int

	def area(self):
		return max(0, self.x_max - self.x_min) * max(0, self.y_max - self.y_min)

	def as_list(self):
		return [int(self.x_min), int(self.y_min), int(self.x_max), int(self.y_max)]


PatchSet = FrozenSet[PatchCoord]


@dataclass(frozen=True)
class PatchGrid:
	h_p: int
	w_p: int
	patch_px: int

	def __post_init__(self):
		for name in ("h_p", "w_p", "patch_px"):
			value = getattr(self, name)
			if not isinstance(value, int) or value < 1:
				raise GridException("Grid "+name+" must be a positive integer, got "+repr(value))

	@property
	def n_patches(self):
		return self.h_p * self.w_p

	@property
	def width(self):
		return self.w_p * self.patch_px

	@property
	def height(self):
		return self.h_p * self.patch_px

	def contains(self, c):
		return 0 <= c[0] < self.h_p and 0 <= c[1] < self.w_p

	def check(self, c):
		if not self.contains(c):
			raise GridException("Coordinate "+repr(tuple(c))+" outside "+str(self.h_p)+"x"+str(self.w_p)+" grid")
		return PatchCoord(int(c[0]), int(c[1]))

	def all_coords(self):
		return frozenset(PatchCoord(i, j) for i in range(self.h_p) for j in range(self.w_p))

	def to_dict(self):
		return {"h_p": self.h_p, "w_p": self.w_p, "patch_px": self.patch_px}

	@classmethod
	def from_dict(cls, data):
		return cls(int(data["h_p"]), int(data["w_p"]), int(data["patch_px"]))

	@classmethod
	def for_image(cls, width, height, patch_px):
		"""Grid tiling a width x height image; sides must be multiples of patch_px."""
		if width % patch_px or height % patch_px:
			raise GridException("Image size "+str(width)+"x"+str(height)+" is not a multiple of patch size "+str(patch_px))
		return cls(height // patch_px, width // patch_px, patch_px)


def patch_set(coords):
	return frozenset(PatchCoord(int(c[0]), int(c[1])) for c in coords)


def coords_array(coords):
	"""(n, 2) int array of coords in lexicographic (row, col) order.

	np.argmin/np.argmax return the first extremum, so over these rows they
	break ties towards the lexicographically smallest coordinate."""
	arr = np.array([(int(c[0]), int(c[1])) for c in coords], dtype=np.int64).reshape(-1, 2)
	return arr[np.lexsort((arr[:, 1], arr[:, 0]))]


def array_set(arr):
	return frozenset(PatchCoord(int(i), int(j)) for i, j in np.asarray(arr).reshape(-1, 2))


def coord_list(arr):
	"""Rows of a coordinate array as PatchCoords, order kept."""
	return [PatchCoord(int(i), int(j)) for i, j in np.asarray(arr).reshape(-1, 2)]


def in_grid(arr, g):
	arr = np.asarray(arr)
	return (arr[..., 0] >= 0) & (arr[..., 0] < g.h_p) & (arr[..., 1] >= 0) & (arr[..., 1] < g.w_p)


def l1(a, b):
	return abs(a[0] - b[0]) + abs(a[1] - b[1])


def l1_matrix(a, b):
	"""Pairwise L1 distances between the rows of two (n, 2) coordinate arrays."""
	return np.abs(np.asarray(a)[:, None, :] - np.asarray(b)[None, :, :]).sum(axis=2)


def membership(cells, members):
	"""Whether each (row, col) of cells, shape (..., 2), is one of members.

	Looks cells up in an occupancy frame spanning the members' extent, so
	cells may lie anywhere, off-grid included."""
	cells = np.asarray(cells, dtype=np.int64)
	members = coords_array(members)
	out = np.zeros(cells.shape[:-1], dtype=bool)
	if not len(members) or not out.size:
		return out
	lo = members.min(axis=0)
	span = members.max(axis=0) - lo + 1
	frame = np.zeros(tuple(span), dtype=bool)
	frame[members[:, 0] - lo[0], members[:, 1] - lo[1]] = True
	rel = cells - lo
	inside = np.all((rel >= 0) & (rel < span), axis=-1)
	out[inside] = frame[rel[inside][:, 0], rel[inside][:, 1]]
	return out


def to_linear(c, g):
	c = g.check(c)
	return c.row * g.w_p + c.col


def from_linear(index, g):
	if not 0 <= index < g.n_patches:
		raise GridException("Linear index "+repr(index)+" outside grid of "+str(g.n_patches)+" patches")
	return PatchCoord(int(index) // g.w_p, int(index) % g.w_p)


def clip_candidates(cands, g):
	"""Keep the in-grid candidates; out-of-grid ones are discarded, not projected."""
	arr = coords_array(cands)
	return array_set(arr[in_grid(arr, g)])


def patch_pixel_rect(c, g):
	c = g.check(c)
	p = g.patch_px
	return BBox(c.col * p, c.row * p, (c.col + 1) * p, (c.row + 1) * p)


def coords_bbox(coords, g):
	"""Union bounding box of a patch set, in pixels."""
	arr = coords_array(coords)
	if not len(arr):
		raise GridException("Bounding box of an empty patch set")
	outside = arr[~in_grid(arr, g)]
	if len(outside):
		g.check(outside[0])
	p = g.patch_px
	(r0, c0), (r1, c1) = arr.min(axis=0), arr.max(axis=0)
	return BBox(int(c0) * p, int(r0) * p, (int(c1) + 1) * p, (int(r1) + 1) * p)


def ball_offsets(radius, include_center=True):
	"""Offsets within L1 distance radius, lexicographic."""
	di, dj = np.mgrid[-radius:radius + 1, -radius:radius + 1]
	offsets = np.stack([di.ravel(), dj.ravel()], axis=1)
	d = np.abs(offsets).sum(axis=1)
	return offsets[(d <= radius) & ((d > 0) | include_center)]


def l1_ball(center, radius, g, include_center=True):
	"""In-grid patches within L1 distance radius of center."""
	cells = ball_offsets(radius, include_center) + np.asarray(center, dtype=np.int64)
	return array_set(cells[in_grid(cells, g)])


def dilate(coords, radius, g):
	"""h_p x w_p mask of the in-grid cells within L1 distance radius of coords."""
	mask = np.zeros((g.h_p, g.w_p), dtype=bool)
	arr = coords_array(coords)
	if len(arr):
		cells = (arr[:, None, :] + ball_offsets(radius)[None, :, :]).reshape(-1, 2)
		cells = cells[in_grid(cells, g)]
		mask[cells[:, 0], cells[:, 1]] = True
	return mask


def grid_mask(coords, g):
	mask = np.zeros((g.h_p, g.w_p), dtype=bool)
	arr = coords_array(coords)
	arr = arr[in_grid(arr, g)]
	mask[arr[:, 0], arr[:, 1]] = True
	return mask


def mask_set(mask):
	return array_set(np.argwhere(mask))


def nearest(p, pool):
	"""L1-nearest member of pool, ties broken lexicographically."""
	arr = coords_array(pool)
	if not len(arr):
		return None
	k = int(np.argmin(np.abs(arr - np.asarray(p, dtype=np.int64)).sum(axis=1)))
	return PatchCoord(int(arr[k, 0]), int(arr[k, 1]))


@dataclass(frozen=True)
class PatchMapping:
	"""Ordered (target, reference) pairs produced by one tool call."""
	pairs: Tuple[Tuple[PatchCoord, PatchCoord], ...]
	tool: str
	grid: PatchGrid

	def __post_init__(self):
		if self.tool not in TOOLS:
			raise GridException("Unknown tool "+repr(self.tool))
		seen = set()
		fixed = []
		for target, reference in self.pairs:
			target = self.grid.check(target)
			reference = self.grid.check(reference)
			if target in seen:
				raise GridException("Target "+repr(tuple(target))+" appears twice in "+self.tool+" mapping")
			seen.add(target)
			fixed.append((target, reference))
		object.__setattr__(self, "pairs", tuple(fixed))

	def __len__(self):
		return len(self.pairs)

	@property
	def artifact_type(self):
		return TOOL_ARTIFACT_TYPES[self.tool]

	@property
	def targets(self):
		return frozenset(t for t, _ in self.pairs)

	@property
	def references(self):
		return frozenset(r for _, r in self.pairs)

	def background(self):
		return self.grid.all_coords() - self.targets

	def linear_pairs(self):
		return [[to_linear(t, self.grid), to_linear(r, self.grid)] for t, r in self.pairs]

	def target_bbox(self):
		if not self.pairs:
			return None
		return coords_bbox(self.targets, self.grid)

	@classmethod
	def from_linear_pairs(cls, pairs, tool, grid):
		return cls(tuple((from_linear(t, grid), from_linear(r, grid)) for t, r in pairs), tool, grid)


def empty_mapping(tool, g):
	return PatchMapping((), tool, g)


def sorted_coords(coords: Iterable[PatchCoord]):
	return sorted(PatchCoord(int(c[0]), int(c[1])) for c in coords)
