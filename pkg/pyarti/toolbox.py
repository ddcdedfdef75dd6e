#!/usr/bin/env python
"""The four artifact-injection tools and their helpers.

Each tool turns patch sets from a grounded scene into a PatchMapping.
All ties are broken deterministically (lexicographic coordinates or the
stated keys) so a fixed seed reproduces byte-identical mappings.
"""

__author__ = "pyarti developers"
__date__ = "18 October 2026"

import hashlib
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from fractions import Fraction

import numpy as np

from .grid import (GridException, PatchCoord, PatchGrid, PatchMapping, TOOL_ARTIFACT_TYPES,
				   coord_list, coords_array, coords_bbox, dilate, empty_mapping, grid_mask, in_grid, l1_ball,
				   l1_matrix, mask_set, membership, nearest, sorted_coords)

KERNELS = ("shuffle", "jitter", "strip")
MAPPING_SCHEMA_VERSION = 1


class ToolException(Exception):
	"""Represents a tool that cannot produce a mapping."""
	def __init__(self, value):
		self.param = value
	def __str__(self):
		return repr(self.param)


@dataclass(frozen=True)
class AddParams:
	alpha: int = 4
	lambda_dist: float = 0.1

	def __post_init__(self):
		if self.alpha < 1 or self.lambda_dist < 0:
			raise ToolException("add needs alpha >= 1 and lambda_dist >= 0")


@dataclass(frozen=True)
class RemoveParams:
	radius: int = 2

	def __post_init__(self):
		if self.radius < 1:
			raise ToolException("remove needs radius >= 1")


@dataclass(frozen=True)
class DistortParams:
	kernel: str = "shuffle"
	sigma: float = 1.5
	strips: int = 3
	max_attempts: int = 16

	def __post_init__(self):
		if self.kernel not in KERNELS:
			raise ToolException("Unknown distortion kernel "+repr(self.kernel))
		if self.sigma < 0 or self.strips < 1 or self.max_attempts < 1:
			raise ToolException("distort needs sigma >= 0, strips >= 1 and max_attempts >= 1")


@dataclass(frozen=True)
class FuseParams:
	band_radius: int = 1
	max_offset: int = 3
	seeds: int = 4
	reversed_fraction: float = 0.5

	def __post_init__(self):
		if self.band_radius < 1 or self.max_offset < 1 or self.seeds < 1:
			raise ToolException("fuse needs band_radius, max_offset and seeds >= 1")
		if not 0.0 <= self.reversed_fraction <= 1.0:
			raise ToolException("fuse reversed_fraction must lie in [0, 1]")


@dataclass(frozen=True)
class ToolParams:
	add: AddParams = field(default_factory=AddParams)
	remove: RemoveParams = field(default_factory=RemoveParams)
	distort: DistortParams = field(default_factory=DistortParams)
	fuse: FuseParams = field(default_factory=FuseParams)

	def snapshot(self, tool):
		return asdict(getattr(self, tool))


def make_rng(seed, image_id, index=0):
	"""Per-work-unit generator, independent of processing order.

	A Philox counter-based bit generator keyed by SeedSequence entropy
	(seed, first 8 bytes of sha256(image_id), index).
	"""
	digest = int.from_bytes(hashlib.sha256(str(image_id).encode("utf-8")).digest()[:8], "big")
	return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), digest, int(index)])))


def round_half_away(x):
	x = Fraction(x)
	r = math.floor(abs(x) + Fraction(1, 2))
	return r if x >= 0 else -r


def _exact_mean(coords):
	n = len(coords)
	return Fraction(sum(c[0] for c in coords), n), Fraction(sum(c[1] for c in coords), n)


def centroid(refs):
	if not refs:
		raise ToolException("Centroid of an empty patch set")
	ci, cj = _exact_mean(list(refs))
	return PatchCoord(round_half_away(ci), round_half_away(cj))


def perimeter_band(refs, center, alpha, g):
	"""Ring of cells with L1 distance 1..alpha from center, clipped to the grid."""
	return l1_ball(center, alpha, g, include_center=False)


def _score_ring(refs, center, ring, ent, sub, params):
	"""Ring cells (lexicographic) and their scores as arrays."""
	refs = frozenset(refs)
	r = coords_array(refs)
	cells = coords_array(ring)
	shifts = cells - np.asarray(center, dtype=np.int64)
	# (cells, refs, 2): every reference patch moved by every candidate shift
	moved = r[None, :, :] + shifts[:, None, :]
	n = len(r)
	r_self = membership(moved, refs).sum(axis=1) / n
	r_ent = membership(moved, frozenset(ent) - refs).sum(axis=1) / n
	r_sub = membership(moved, sub).sum(axis=1) / n
	g_dist = 1.0 / (1.0 + params.lambda_dist * np.abs(shifts).sum(axis=1))
	return cells, (3.0 - r_self - r_ent - r_sub) * g_dist


def add_scores(refs, center, ring, ent, sub, params):
	"""Score of every ring cell, keyed by cell."""
	cells, scores = _score_ring(refs, center, ring, ent, sub, params)
	return {PatchCoord(int(i), int(j)): float(s) for (i, j), s in zip(cells, scores)}


def add_tool(refs, ent, sub, params, g):
	"""Duplicate the subentity at the best-scoring ring cell around its centroid.

	Overlap ratios use |shifted set| before clipping as denominator;
	shifted targets that leave the grid are dropped from the mapping.
	"""
	if not refs:
		raise ToolException("add needs a non-empty reference set")
	for r in refs:
		g.check(r)
	center = centroid(refs)
	ring = perimeter_band(refs, center, params.alpha, g)
	if not ring:
		raise ToolException("add found no candidate cell around "+repr(tuple(center)))
	cells, scores = _score_ring(refs, center, ring, ent, sub, params)
	shift = cells[int(np.argmax(scores))] - np.asarray(center, dtype=np.int64)
	r = coords_array(refs)
	t = r + shift
	keep = in_grid(t, g)
	return PatchMapping(tuple(zip(coord_list(t[keep]), coord_list(r[keep]))), "add", g)


def local_neighborhood(targets, radius, g):
	return mask_set(dilate(targets, radius, g) & ~grid_mask(targets, g))


def remove_pool(targets, ent, sub, radius, g):
	"""Reference pool: true background when it dominates, otherwise non-subentity neighbors."""
	nbr = local_neighborhood(targets, radius, g)
	no_sub = nbr - sub
	non_ent = no_sub - ent
	if len(non_ent) > 0.5 * len(no_sub):
		return non_ent
	return no_sub


def remove_tool(targets, ent, sub, params, g):
	if not targets:
		raise ToolException("remove needs a non-empty target set")
	pool = remove_pool(frozenset(targets), frozenset(ent), frozenset(sub), params.radius, g)
	if not pool:
		raise ToolException("remove found no reference patch within radius "+str(params.radius))
	pool = coords_array(pool)
	t = coords_array(targets)
	refs = pool[l1_matrix(t, pool).argmin(axis=1)]
	return PatchMapping(tuple(zip(coord_list(t), coord_list(refs))), "remove", g)


def shuffle_kernel(targets, rng):
	targets = list(targets)
	return [targets[i] for i in rng.permutation(len(targets))]


def jitter_kernel(targets, sigma, g, ent, max_attempts, rng):
	"""Gaussian offsets projected onto the grid, accepted inside ent."""
	ent = frozenset(ent)
	ent_sorted = sorted_coords(ent)
	refs = []
	for t in targets:
		found = None
		for _ in range(max_attempts):
			dy, dx = rng.normal(0.0, sigma, size=2)
			ny = min(max(round_half_away(t[0] + dy), 0), g.h_p - 1)
			nx = min(max(round_half_away(t[1] + dx), 0), g.w_p - 1)
			cand = PatchCoord(ny, nx)
			if not ent or cand in ent:
				found = cand
				break
		if found is None:
			found = nearest(t, ent_sorted) if ent else PatchCoord(*t)
		refs.append(found)
	return refs


def split_counts(n, parts):
	"""Near-equal partition sizes, larger parts first."""
	q, rem = divmod(n, parts)
	return [q + (1 if k < rem else 0) for k in range(parts)]


def strip_shift(s):
	"""Shift of the s-th strip (1-based): +1, -2, +3, -4, ..."""
	return s if s % 2 == 1 else -s


def strip_kernel(targets, strips, g):
	targets = [PatchCoord(*t) for t in targets]
	if not targets:
		raise ToolException("strip kernel needs a non-empty target set")
	rows = [t.row for t in targets]
	cols = [t.col for t in targets]
	vertical = (max(rows) - min(rows) + 1) >= (max(cols) - min(cols) + 1)
	key = (lambda c: (c.row, c.col)) if vertical else (lambda c: (c.col, c.row))
	ordered = sorted(targets, key=key)
	reference_of = {}
	start = 0
	for s, size in enumerate(split_counts(len(ordered), strips), 1):
		strip = ordered[start:start + size]
		start += size
		for u in range(1, size + 1):
			v = 1 + ((u + strip_shift(s) - 1) % size)
			reference_of[strip[u - 1]] = strip[v - 1]
	return [reference_of[t] for t in targets]


def distort_tool(targets, ent, params, g, rng):
	if not targets:
		raise ToolException("distort needs a non-empty target set")
	ordered = sorted_coords(targets)
	if params.kernel == "shuffle":
		refs = shuffle_kernel(ordered, rng)
	elif params.kernel == "jitter":
		refs = jitter_kernel(ordered, params.sigma, g, ent, params.max_attempts, rng)
	elif params.kernel == "strip":
		refs = strip_kernel(ordered, params.strips, g)
	else:
		raise ToolException("Unknown distortion kernel "+repr(params.kernel))
	return PatchMapping(tuple(zip(ordered, refs)), "distort", g)


def overlap_fusion_band(overlap, fg, band_radius, g):
	return mask_set(dilate(overlap, band_radius, g) & grid_mask(fg, g))


def farthest_point_sampling(pts, k):
	"""Greedy max-min seeds, starting from the point closest to the centroid.

	Ties go to the lexicographically smallest point."""
	pts = coords_array(pts)
	n = len(pts)
	if not n or k < 1:
		return []
	k = min(k, n)
	# n times the L1 distance to the exact centroid, in integers
	first = int(np.argmin(np.abs(n * pts - pts.sum(axis=0)).sum(axis=1)))
	seeds = [first]
	dist = np.abs(pts - pts[first]).sum(axis=1)
	while len(seeds) < k:
		nxt = int(np.argmax(dist))
		seeds.append(nxt)
		dist = np.minimum(dist, np.abs(pts - pts[nxt]).sum(axis=1))
	return coord_list(pts[seeds])


def _min_distance(p, pool):
	if not pool:
		return math.inf
	return int(np.abs(coords_array(pool) - np.asarray(p, dtype=np.int64)).sum(axis=1).min())


def opposite_region(seed, a_only, b_only, fg, band):
	d_a = _min_distance(seed, a_only)
	d_b = _min_distance(seed, b_only)
	if d_a < d_b:
		return frozenset(b_only)
	if d_b < d_a:
		return frozenset(a_only)
	return frozenset(fg) - frozenset(band)


def offset_set(max_offset):
	"""Omega, ordered by (|di|+|dj|, di, dj)."""
	cells = [(di, dj) for di in range(-max_offset, max_offset + 1)
			 for dj in range(-max_offset, max_offset + 1)
			 if 1 <= abs(di) + abs(dj) <= max_offset]
	return sorted(cells, key=lambda o: (abs(o[0]) + abs(o[1]), o[0], o[1]))


def _valid_shift(p, offset, opp, g, band):
	r = (p[0] + offset[0], p[1] + offset[1])
	return g.contains(r) and r in opp and r not in band


def offset_hits(region, offsets, opp, g, band):
	"""Number of region patches each offset lands on a free opposite-side patch."""
	moved = coords_array(region)[None, :, :] + np.asarray(offsets, dtype=np.int64).reshape(-1, 1, 2)
	valid = in_grid(moved, g) & membership(moved, opp) & ~membership(moved, band)
	return valid.sum(axis=1)


def best_offset(region, opp, max_offset, g, band):
	"""First offset of Omega with the most hits; None when nothing lands."""
	offsets = offset_set(max_offset)
	hits = offset_hits(region, offsets, opp, g, band)
	if not len(hits) or hits.max() == 0:
		return None
	return offsets[int(np.argmax(hits))]


def offset_or_nearest(p, offset, opp, g, band):
	if not opp:
		raise ToolException("No opposite-side patch for "+repr(tuple(p)))
	if offset is not None and _valid_shift(p, offset, opp, g, band):
		return PatchCoord(p[0] + offset[0], p[1] + offset[1])
	return nearest(p, sorted_coords(opp))


def fuse_tool(ent_a, ent_b, params, g, rng):
	ent_a, ent_b = frozenset(ent_a), frozenset(ent_b)
	overlap = ent_a & ent_b
	if not overlap:
		return empty_mapping("fuse", g)
	fg = ent_a | ent_b
	a_only, b_only = ent_a - overlap, ent_b - overlap
	band = overlap_fusion_band(overlap, fg, params.band_radius, g)
	if not band:
		return empty_mapping("fuse", g)
	seeds = farthest_point_sampling(band, params.seeds)
	cells = coords_array(band)
	# nearest seed per band patch, ties to the lower seed index
	owner = l1_matrix(cells, np.array(seeds, dtype=np.int64)).argmin(axis=1)
	regions = [coord_list(cells[owner == s]) for s in range(len(seeds))]
	pairs = []
	for seed, region in zip(seeds, regions):
		if not region:
			continue
		opp = opposite_region(seed, a_only, b_only, fg, band)
		if not opp:
			logging.debug("fuse region at "+repr(tuple(seed))+" has no opposite pool, skipped")
			continue
		offset = best_offset(region, opp, params.max_offset, g, band)
		for p in region:
			pairs.append((p, offset_or_nearest(p, offset, opp, g, band)))
	n_rev = int(math.floor(params.reversed_fraction * len(pairs) + 0.5))
	if n_rev:
		taken = set(t for t, _ in pairs)
		chosen = sorted(int(i) for i in rng.permutation(len(pairs))[:n_rev])
		for i in chosen:
			t, r = pairs[i]
			if r not in taken:
				pairs.append((r, t))
				taken.add(r)
	return PatchMapping(tuple(pairs), "fuse", g)


def export_mapping(mapping, seed, params=None, subject=None, schedule=None, image_id=None, injection_id=None):
	"""Mapping export document consumed by the oracle, the verifier and GPU pipelines."""
	bbox = mapping.target_bbox()
	return {
		"schema_version": MAPPING_SCHEMA_VERSION,
		"image_id": image_id,
		"injection_id": injection_id,
		"grid": mapping.grid.to_dict(),
		"tool": mapping.tool,
		"artifact_type": mapping.artifact_type,
		"pairs": mapping.linear_pairs(),
		"target_bbox": bbox.as_list() if bbox else None,
		"seed": int(seed),
		"params": params or {},
		"subject": subject,
		"schedule": schedule,
	}


def write_mapping(path, document):
	with open(path, "w", encoding="utf-8") as f:
		json.dump(document, f, sort_keys=True, indent=1)
		f.write("\n")


def read_mapping(path):
	with open(path, "r", encoding="utf-8") as f:
		document = json.load(f)
	if document.get("schema_version") != MAPPING_SCHEMA_VERSION:
		raise ToolException("Unsupported mapping schema "+repr(document.get("schema_version"))+" in "+str(path))
	grid = PatchGrid.from_dict(document["grid"])
	try:
		mapping = PatchMapping.from_linear_pairs(document["pairs"], document["tool"], grid)
	except GridException as e:
		raise ToolException("Invalid mapping in "+str(path)+": "+str(e))
	if TOOL_ARTIFACT_TYPES[mapping.tool] != document["artifact_type"]:
		raise ToolException("Artifact type "+repr(document["artifact_type"])+" does not match tool "+mapping.tool)
	return mapping, document


@dataclass(frozen=True)
class Candidate:
	"""One planned injection: a tool applied to a subentity or an entity pair."""
	tool: str
	subentity: int = -1
	pair: tuple = ()

	def describe(self):
		if self.tool == "fuse":
			return "fuse:"+str(self.pair[0])+"+"+str(self.pair[1])
		return self.tool+":"+str(self.subentity)


def candidates(scene, tools, entity_pairs):
	"""Every tool application the scene allows, in a stable order."""
	found = []
	for k, sub in enumerate(scene.subentities):
		if sub.level == "peripheral":
			for tool in ("add", "remove"):
				if tool in tools:
					found.append(Candidate(tool, k))
		elif "distort" in tools:
			found.append(Candidate("distort", k))
	if "fuse" in tools:
		for pair in entity_pairs:
			found.append(Candidate("fuse", pair=tuple(pair)))
	return found


def plan_injections(scene, tools, entity_pairs, rng, count=1):
	"""Seeded uniform choice of count candidates without replacement; 0 keeps all."""
	found = candidates(scene, tools, entity_pairs)
	if count <= 0 or count >= len(found):
		return found
	chosen = sorted(int(i) for i in rng.choice(len(found), size=count, replace=False))
	return [found[i] for i in chosen]


def run_tool(candidate, scene, params, rng):
	g = scene.grid
	if candidate.tool == "fuse":
		a, b = candidate.pair
		return fuse_tool(scene.entities[a].patch_set, scene.entities[b].patch_set, params.fuse, g, rng)
	refs = scene.subentities[candidate.subentity].instance.patch_set
	ent, sub = scene.context(candidate.subentity)
	if candidate.tool == "add":
		return add_tool(refs, ent, sub, params.add, g)
	if candidate.tool == "remove":
		return remove_tool(refs, ent, sub, params.remove, g)
	if candidate.tool == "distort":
		return distort_tool(refs, ent, params.distort, g, rng)
	raise ToolException("Unknown tool "+repr(candidate.tool))


def _patch_rect(coords):
	arr = coords_array(coords)
	(r0, c0), (r1, c1) = arr.min(axis=0), arr.max(axis=0)
	return int(r0), int(c0), int(r1), int(c1)


def absent_boxes(scene, sub_index):
	"""Pixel boxes that hold no patch of any subentity sharing this one's label.

	Other entities' boxes come first, in entity order, then the subentity's
	own box moved one box width right and left, then one box height down and up.
	"""
	g = scene.grid
	sub = scene.subentities[sub_index]
	taken = grid_mask(frozenset().union(*(s.instance.patch_set for s in scene.subentities
										  if s.instance.label == sub.instance.label)), g)
	boxes = []

	def offer(r0, c0, r1, c1):
		if r0 < 0 or c0 < 0 or r1 >= g.h_p or c1 >= g.w_p or taken[r0:r1 + 1, c0:c1 + 1].any():
			return
		box = coords_bbox([(r0, c0), (r1, c1)], g).as_list()
		if box not in boxes:
			boxes.append(box)

	for e in scene.entities:
		if e.patch_set:
			offer(*_patch_rect(e.patch_set))
	r0, c0, r1, c1 = _patch_rect(sub.instance.patch_set)
	h, w = r1 - r0 + 1, c1 - c0 + 1
	for di, dj in ((0, w), (0, -w), (h, 0), (-h, 0)):
		offer(r0 + di, c0 + dj, r1 + di, c1 + dj)
	return boxes


def _subentity_subject(scene, k):
	sub = scene.subentities[k]
	return {"entity": scene.entities[sub.parent].label, "subentity": sub.instance.label,
			"bbox": scene.subentity_bbox(k).as_list(), "absent_bboxes": absent_boxes(scene, k)}


def candidate_subject(candidate, scene):
	"""Entity/subentity labels and boxes the clean-image questions talk about."""
	if candidate.tool != "fuse":
		return _subentity_subject(scene, candidate.subentity)
	for k, sub in enumerate(scene.subentities):
		if sub.parent in candidate.pair:
			return _subentity_subject(scene, k)
	a, b = candidate.pair
	return {"entity": scene.entities[a].label, "subentity": None, "bbox": None,
			"other_entity": scene.entities[b].label}
