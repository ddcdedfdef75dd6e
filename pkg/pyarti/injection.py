#!/usr/bin/env python
"""Apply patch mappings: pixel-space oracle and toy attention verifier.

The oracle copies reference patch blocks onto target blocks.  The
verifier is a single-head attention layer with 2D axial RoPE that runs
an inversion pass (caching values) and an injection pass that rewrites
target positions and values from the mapping.
"""

__author__ = "pyarti developers"
__date__ = "18 October 2026"

import math
from dataclasses import dataclass, field

import numpy as np
from PIL import Image

from .grid import PatchGrid, patch_pixel_rect, to_linear

ARTIFACT_TYPES = ("duplication", "omission", "distortion", "fusion")


class InjectionException(Exception):
	"""Represents a failure while applying a mapping."""
	def __init__(self, value):
		self.param = value
	def __str__(self):
		return repr(self.param)


def _rope_tables(positions, dim, base):
	"""cos/sin tables, shape (n, dim//4), for rows and columns of positions."""
	if dim % 2:
		raise InjectionException("RoPE needs an even dimension, got "+str(dim))
	half = dim // 2
	n_freq = half // 2
	theta = base ** (-2.0 * np.arange(n_freq) / half)
	positions = np.asarray(positions, dtype=np.float64).reshape(-1, 2)
	row_angle = positions[:, :1] * theta[None, :]
	col_angle = positions[:, 1:] * theta[None, :]
	return np.cos(row_angle), np.sin(row_angle), np.cos(col_angle), np.sin(col_angle)


def _rotate_pairs(block, cos, sin):
	out = block.copy()
	n_freq = cos.shape[1]
	even = block[:, 0:2 * n_freq:2]
	odd = block[:, 1:2 * n_freq:2]
	out[:, 0:2 * n_freq:2] = even * cos - odd * sin
	out[:, 1:2 * n_freq:2] = even * sin + odd * cos
	return out


def rope_apply_rows(matrix, positions, base=10000.0):
	"""Rotate each row by its (row, col) position.

	The first half of the dimensions rotates by row angles, the second
	half by column angles; with dim/2 odd the last dimension of each half
	passes through unrotated.
	"""
	matrix = np.asarray(matrix, dtype=np.float64)
	if matrix.ndim != 2:
		raise InjectionException("RoPE expects a 2D matrix, got shape "+repr(matrix.shape))
	dim = matrix.shape[1]
	cos_r, sin_r, cos_c, sin_c = _rope_tables(positions, dim, base)
	half = dim // 2
	out = np.empty_like(matrix)
	out[:, :half] = _rotate_pairs(matrix[:, :half], cos_r, sin_r)
	out[:, half:] = _rotate_pairs(matrix[:, half:], cos_c, sin_c)
	return out


def rope_apply(vec, pos, base=10000.0):
	vec = np.asarray(vec, dtype=np.float64)
	return rope_apply_rows(vec[None, :], [tuple(pos)], base)[0]


@dataclass(frozen=True)
class ToyAttentionLayer:
	grid: PatchGrid
	dim: int
	w_q: np.ndarray = field(repr=False)
	w_k: np.ndarray = field(repr=False)
	w_v: np.ndarray = field(repr=False)
	rope_base: float = 10000.0

	def __post_init__(self):
		if self.dim % 2:
			raise InjectionException("Attention dimension must be even, got "+str(self.dim))
		for name in ("w_q", "w_k", "w_v"):
			w = np.asarray(getattr(self, name), dtype=np.float64)
			if w.shape != (self.dim, self.dim) or not np.all(np.isfinite(w)):
				raise InjectionException(name+" must be a finite "+str(self.dim)+"x"+str(self.dim)+" matrix")
			w.setflags(write=False)
			object.__setattr__(self, name, w)
		if self.rope_base <= 0:
			raise InjectionException("rope_base must be positive")

	@property
	def n_patches(self):
		return self.grid.n_patches

	def positions(self):
		return np.array([(i, j) for i in range(self.grid.h_p) for j in range(self.grid.w_p)], dtype=np.int64)

	@classmethod
	def random(cls, grid, dim, rng, rope_base=10000.0):
		return cls(grid, dim, rng.standard_normal((dim, dim)), rng.standard_normal((dim, dim)),
				   rng.standard_normal((dim, dim)), rope_base)


@dataclass(frozen=True)
class ValueCache:
	v_inv: np.ndarray = field(repr=False)


def _check_input(layer, x):
	x = np.asarray(x, dtype=np.float64)
	if x.shape != (layer.n_patches, layer.dim):
		raise InjectionException("Input shape "+repr(x.shape)+" does not match layer "+repr((layer.n_patches, layer.dim)))
	if not np.all(np.isfinite(x)):
		raise InjectionException("Non-finite attention input")
	return x


def softmax_rows(logits):
	z = logits - logits.max(axis=1, keepdims=True)
	e = np.exp(z)
	return e / e.sum(axis=1, keepdims=True)


def _attend(q, k, v, positions, base, trace):
	q_rot = rope_apply_rows(q, positions, base)
	k_rot = rope_apply_rows(k, positions, base)
	weights = softmax_rows(q_rot @ k_rot.T / math.sqrt(q.shape[1]))
	out = weights @ v
	if trace is not None:
		trace.update({"q": q_rot, "k": k_rot, "v": v, "weights": weights, "positions": positions})
	return out


def attention_inversion_pass(layer, x, trace=None):
	"""Vanilla RoPE attention; caches V for the injection pass."""
	x = _check_input(layer, x)
	v = x @ layer.w_v
	out = _attend(x @ layer.w_q, x @ layer.w_k, v, layer.positions(), layer.rope_base, trace)
	return out, ValueCache(v.copy())


def attention_injection_pass(layer, x, cache, mapping, pe_on=True, value_on=True, trace=None):
	"""Attention with target positions/values taken from their references.

	Background rows always read their values from the cache.
	"""
	x = _check_input(layer, x)
	if cache.v_inv.shape != (layer.n_patches, layer.dim):
		raise InjectionException("Value cache shape "+repr(cache.v_inv.shape)+" does not match layer")
	if mapping.grid.n_patches != layer.n_patches:
		raise InjectionException("Mapping grid has "+str(mapping.grid.n_patches)+" patches, layer has "+str(layer.n_patches))
	positions = layer.positions()
	v = x @ layer.w_v
	is_target = np.zeros(layer.n_patches, dtype=bool)
	for t, r in mapping.pairs:
		ti = to_linear(t, mapping.grid)
		ri = to_linear(r, mapping.grid)
		is_target[ti] = True
		if pe_on:
			positions[ti] = (r.row, r.col)
		if value_on:
			v[ti] = cache.v_inv[ri]
	v[~is_target] = cache.v_inv[~is_target]
	return _attend(x @ layer.w_q, x @ layer.w_k, v, positions, layer.rope_base, trace)


@dataclass(frozen=True)
class InjectionSchedule:
	total_steps: int = 25
	pe_disabled_final_steps: tuple = (("duplication", 5), ("omission", 1), ("distortion", 5), ("fusion", 5))
	value_steps: int = 15
	value_blocks: tuple = (20, 38)

	def __post_init__(self):
		table = dict(self.pe_disabled_final_steps)
		for kind, steps in table.items():
			if kind not in ARTIFACT_TYPES:
				raise InjectionException("Unknown artifact type "+repr(kind)+" in schedule")
			if not 0 <= steps < self.total_steps:
				raise InjectionException("pe_disabled_final_steps for "+kind+" must lie in [0, total_steps)")
		if not 0 <= self.value_steps <= self.total_steps:
			raise InjectionException("value_steps must lie in [0, total_steps]")
		if self.value_blocks[0] > self.value_blocks[1]:
			raise InjectionException("value_blocks must be an inclusive (low, high) range")

	def disabled_steps(self, artifact_type):
		table = dict(self.pe_disabled_final_steps)
		if artifact_type not in table:
			raise InjectionException("Unknown artifact type "+repr(artifact_type))
		return table[artifact_type]

	def to_dict(self):
		return {"total_steps": self.total_steps,
				"pe_disabled_final_steps": dict(self.pe_disabled_final_steps),
				"value_steps": self.value_steps,
				"value_blocks": list(self.value_blocks)}


def schedule_gates(schedule, artifact_type, step, block):
	"""(pe_on, value_on) for one denoising step and transformer block."""
	disabled = schedule.disabled_steps(artifact_type)
	if not 0 <= step < schedule.total_steps:
		raise InjectionException("Step "+repr(step)+" outside [0, "+str(schedule.total_steps)+")")
	pe_on = step < schedule.total_steps - disabled
	low, high = schedule.value_blocks
	value_on = step < schedule.value_steps and low <= block <= high
	return pe_on, value_on


def schedule_metadata(schedule, artifact_type):
	"""Gating windows an external denoiser replays for this artifact type."""
	disabled = schedule.disabled_steps(artifact_type)
	return {"total_steps": schedule.total_steps,
			"pe_steps": [0, schedule.total_steps - disabled],
			"value_steps": [0, schedule.value_steps],
			"value_blocks": list(schedule.value_blocks)}


def verify_mapping(mapping, schedule, artifact_type, rng, dim=16, rope_base=10000.0):
	"""Replay the first and last denoising steps on a seeded toy layer.

	Checks the background value rule and finiteness and reports the mean
	absolute change of target and background rows against the inversion
	output.
	"""
	layer = ToyAttentionLayer.random(mapping.grid, dim, rng, rope_base)
	x = rng.standard_normal((layer.n_patches, dim))
	vanilla, cache = attention_inversion_pass(layer, x)
	targets = np.zeros(layer.n_patches, dtype=bool)
	for t, _ in mapping.pairs:
		targets[to_linear(t, mapping.grid)] = True
	block = schedule.value_blocks[0]
	report = {"dim": dim, "steps": []}
	for step in (0, schedule.total_steps - 1):
		pe_on, value_on = schedule_gates(schedule, artifact_type, step, block)
		trace = {}
		out = attention_injection_pass(layer, x, cache, mapping, pe_on, value_on, trace)
		if not np.all(np.isfinite(out)):
			raise InjectionException("Injected attention produced non-finite values")
		if not np.array_equal(trace["v"][~targets], cache.v_inv[~targets]):
			raise InjectionException("Background values differ from the inversion cache")
		delta = np.abs(out - vanilla).mean(axis=1)
		report["steps"].append({
			"step": step, "block": block, "pe_on": bool(pe_on), "value_on": bool(value_on),
			"target_delta": float(delta[targets].mean()) if targets.any() else 0.0,
			"background_delta": float(delta[~targets].mean()) if (~targets).any() else 0.0,
		})
	return report


@dataclass(frozen=True)
class PixelImage:
	data: np.ndarray = field(repr=False)

	def __post_init__(self):
		data = np.asarray(self.data)
		if data.ndim != 3 or data.shape[2] != 3 or data.dtype != np.uint8:
			raise InjectionException("PixelImage needs an HxWx3 uint8 array, got "+repr(data.shape)+" "+str(data.dtype))
		object.__setattr__(self, "data", data)

	@property
	def width(self):
		return self.data.shape[1]

	@property
	def height(self):
		return self.data.shape[0]

	@property
	def channels(self):
		return 3


def load_png(path):
	with Image.open(path) as img:
		return PixelImage(np.array(img.convert("RGB"), dtype=np.uint8))


def save_png(image, path):
	Image.fromarray(image.data).save(path, format="PNG")


def _feather_alpha(size, blend):
	"""Per-pixel weight of the reference inside one target block."""
	idx = np.arange(size)
	edge = np.minimum(idx, size - 1 - idx)
	ramp = np.minimum(1.0, (edge + 1.0) / (blend + 1.0))
	return np.minimum(ramp[:, None], ramp[None, :])


def render_pixel_oracle(img, mapping, blend=0):
	"""Copy each reference patch block onto its target block.

	References are always read from the input image.  With blend > 0 the
	copied block is feathered into the original over blend pixels at the
	block edges.
	"""
	g = mapping.grid
	if (img.width, img.height) != (g.width, g.height):
		raise InjectionException("Image "+str(img.width)+"x"+str(img.height)+" is not tiled by grid "+str(g.width)+"x"+str(g.height))
	src = img.data
	out = src.copy()
	alpha = _feather_alpha(g.patch_px, blend)[:, :, None] if blend > 0 else None
	for t, r in mapping.pairs:
		tb = patch_pixel_rect(t, g)
		rb = patch_pixel_rect(r, g)
		block = src[rb.y_min:rb.y_max, rb.x_min:rb.x_max]
		if alpha is None:
			out[tb.y_min:tb.y_max, tb.x_min:tb.x_max] = block
		else:
			orig = src[tb.y_min:tb.y_max, tb.x_min:tb.x_max].astype(np.float64)
			mixed = alpha * block.astype(np.float64) + (1.0 - alpha) * orig
			out[tb.y_min:tb.y_max, tb.x_min:tb.x_max] = np.clip(np.rint(mixed), 0, 255).astype(np.uint8)
	return PixelImage(out)
