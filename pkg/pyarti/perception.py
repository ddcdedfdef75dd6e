#!/usr/bin/env python
"""Ground segmentation masks into a patch-level scene.

Masks arrive as files (8-bit PNG or COCO run-length entries), are
binarized onto the patch grid and every subentity is attached to the
entity containing most of it.

A subentity takes its level from its parent entity's vocabulary entry.
When that entry does not list it, the first entity in alphabetical order
that does list the label supplies the level, so a "head" grounded under a
"cat" whose entry only names "tail" still gets the level "dog" gives it.
Labels no entry lists are dropped.
"""

__author__ = "pyarti developers"
__date__ = "18 October 2026"

import logging
import os
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np
import yaml
from PIL import Image

from .grid import PatchCoord, PatchGrid, coords_bbox
from .injection import load_png

try:
	from pycocotools import mask as mask_utils
except ImportError:
	mask_utils = None

LEVELS = ("peripheral", "intermediate")
KINDS = ("entity", "subentity")


class PerceptionException(Exception):
	"""Represents bad masks, manifests or vocabularies."""
	def __init__(self, value):
		self.param = value
	def __str__(self):
		return repr(self.param)


@dataclass(frozen=True)
class VocabularyEntry:
	entity: str
	subentities: Tuple[Tuple[str, str], ...]

	def __post_init__(self):
		if not self.entity:
			raise PerceptionException("Vocabulary entity name is empty")
		for name, level in self.subentities:
			if not name:
				raise PerceptionException("Empty subentity name under "+repr(self.entity))
			if level not in LEVELS:
				raise PerceptionException("Subentity "+repr(name)+" has unknown level "+repr(level))

	def level_of(self, subentity):
		for name, level in self.subentities:
			if name == subentity:
				return level
		return None


@dataclass(frozen=True)
class MaskInstance:
	label: str
	kind: str
	mask: np.ndarray = field(repr=False, compare=False)
	patch_set: frozenset = frozenset()

	def __post_init__(self):
		if self.kind not in KINDS:
			raise PerceptionException("Unknown instance kind "+repr(self.kind))


@dataclass(frozen=True)
class GroundedSubentity:
	instance: MaskInstance
	parent: int
	level: str
	ratio: float


@dataclass(frozen=True)
class GroundedScene:
	grid: PatchGrid
	entities: Tuple[MaskInstance, ...]
	subentities: Tuple[GroundedSubentity, ...]
	dropped: Tuple[str, ...] = ()

	def context(self, sub_index):
		"""Parent entity patches and the patches of other same-label subentities."""
		sub = self.subentities[sub_index]
		ent = self.entities[sub.parent].patch_set
		others = frozenset()
		for k, other in enumerate(self.subentities):
			if k != sub_index and other.instance.label == sub.instance.label:
				others = others | other.instance.patch_set
		return ent, others - sub.instance.patch_set

	def subentity_bbox(self, sub_index):
		return coords_bbox(self.subentities[sub_index].instance.patch_set, self.grid)

	def to_dict(self):
		def patches(s):
			return sorted([int(c.row) * self.grid.w_p + int(c.col) for c in s])
		return {
			"grid": self.grid.to_dict(),
			"entities": [{"label": e.label, "patches": patches(e.patch_set)} for e in self.entities],
			"subentities": [{"label": s.instance.label, "parent": s.parent, "level": s.level,
							 "ratio": s.ratio, "patches": patches(s.instance.patch_set)}
							for s in self.subentities],
			"dropped": list(self.dropped),
		}


def scene_from_dict(data):
	"""Rebuild a GroundedScene from its exported summary; masks are not kept."""
	grid = PatchGrid.from_dict(data["grid"])

	def patches(indices):
		return frozenset(PatchCoord(int(k) // grid.w_p, int(k) % grid.w_p) for k in indices)
	entities = tuple(MaskInstance(e["label"], "entity", None, patches(e["patches"])) for e in data["entities"])
	subs = tuple(GroundedSubentity(MaskInstance(s["label"], "subentity", None, patches(s["patches"])),
								   int(s["parent"]), s["level"], float(s["ratio"]))
				 for s in data["subentities"])
	return GroundedScene(grid, entities, subs, tuple(data.get("dropped", ())))


def binarize_to_patches(mask, g, patch_fg_threshold=0.5):
	"""Patches whose foreground fraction is at least patch_fg_threshold."""
	mask = np.asarray(mask)
	if mask.shape != (g.height, g.width):
		raise PerceptionException("Mask shape "+repr(mask.shape)+" does not match grid pixels "+repr((g.height, g.width)))
	p = g.patch_px
	counts = (mask != 0).reshape(g.h_p, p, g.w_p, p).sum(axis=(1, 3))
	rows, cols = np.nonzero(counts >= patch_fg_threshold * p * p)
	return frozenset(PatchCoord(int(i), int(j)) for i, j in zip(rows, cols))


def overlap_ratio(sub, ent):
	if not sub:
		raise PerceptionException("Overlap ratio of an empty subentity is undefined")
	return len(sub & ent) / len(sub)


def make_instance(label, kind, mask, g, patch_fg_threshold=0.5):
	mask = np.asarray(mask) != 0
	return MaskInstance(label, kind, mask, binarize_to_patches(mask, g, patch_fg_threshold))


def _vocabulary_level(vocab, entity_label, sub_label):
	"""Level from the parent's entry, else from the first entity (by name) listing sub_label."""
	if entity_label in vocab:
		level = vocab[entity_label].level_of(sub_label)
		if level:
			return level
	for name in sorted(vocab):
		level = vocab[name].level_of(sub_label)
		if level:
			return level
	return None


def ground_scene(grid, entities, subentities, vocab, containment_threshold=0.5, image_id=""):
	"""Attach every subentity to its best-containing entity.

	Ties go to the lowest entity index.  Subentities below the containment
	threshold, empty on the patch grid or missing from the vocabulary are
	dropped with a warning.
	"""
	entities = tuple(entities)
	grids = set()
	grounded = []
	dropped = []
	for inst in list(entities) + list(subentities):
		grids.add(inst.mask.shape)
	if len(grids) > 1:
		raise PerceptionException("Scene "+repr(image_id)+" mixes mask sizes "+repr(sorted(grids)))
	for sub in subentities:
		if not sub.patch_set:
			logging.warning("stage=perceive image="+str(image_id)+" decision=drop reason=empty_on_grid subentity="+sub.label)
			dropped.append(sub.label)
			continue
		best, best_ratio = None, -1.0
		for k, ent in enumerate(entities):
			ratio = overlap_ratio(sub.patch_set, ent.patch_set)
			if ratio > best_ratio:
				best, best_ratio = k, ratio
		if best is None or best_ratio < containment_threshold:
			logging.warning("stage=perceive image="+str(image_id)+" decision=drop reason=low_containment subentity="+sub.label+" ratio=%.3f" % max(best_ratio, 0.0))
			dropped.append(sub.label)
			continue
		level = _vocabulary_level(vocab, entities[best].label, sub.label)
		if level is None:
			logging.warning("stage=perceive image="+str(image_id)+" decision=drop reason=not_in_vocabulary subentity="+sub.label)
			dropped.append(sub.label)
			continue
		grounded.append(GroundedSubentity(sub, best, level, best_ratio))
	return GroundedScene(grid, entities, tuple(grounded), tuple(dropped))


def overlapping_entity_pairs(scene):
	pairs = []
	for a in range(len(scene.entities)):
		for b in range(a + 1, len(scene.entities)):
			if scene.entities[a].patch_set & scene.entities[b].patch_set:
				pairs.append((a, b))
	return pairs


def load_vocabulary(path):
	"""Read the entity -> [{subentity, level}] YAML vocabulary."""
	with open(path, "r", encoding="utf-8") as f:
		data = yaml.safe_load(f)
	if data is None:
		return {}
	if not isinstance(data, dict):
		raise PerceptionException("Vocabulary "+str(path)+" must map entity names to subentity lists")
	vocab = {}
	for entity, items in data.items():
		subs = []
		for item in items or []:
			if not isinstance(item, dict) or "subentity" not in item or "level" not in item:
				raise PerceptionException("Vocabulary entry under "+repr(entity)+" needs subentity and level")
			subs.append((str(item["subentity"]), str(item["level"])))
		vocab[str(entity)] = VocabularyEntry(str(entity), tuple(subs))
	return vocab


def decode_rle(entry):
	"""Decode a COCO run-length entry {size: [H, W], counts: str or list}."""
	if mask_utils is None:
		raise PerceptionException("Run-length masks require pycocotools. Please install pycocotools and try again.")
	try:
		h, w = [int(v) for v in entry["size"]]
		counts = entry["counts"]
	except (KeyError, TypeError, ValueError):
		raise PerceptionException("Malformed run-length entry "+repr(entry)[:80])
	if isinstance(counts, list):
		if sum(counts) != h * w:
			raise PerceptionException("Run lengths sum to "+str(sum(counts))+", expected "+str(h * w))
		rle = mask_utils.frPyObjects({"size": [h, w], "counts": counts}, h, w)
	else:
		rle = {"size": [h, w], "counts": counts.encode("ascii") if isinstance(counts, str) else counts}
	return mask_utils.decode(rle).astype(bool)


def load_mask(source, base_dir=""):
	"""Load a binary mask from a PNG path or a run-length entry."""
	if isinstance(source, dict):
		return decode_rle(source)
	path = os.path.join(base_dir, source)
	try:
		img = Image.open(path)
	except OSError as e:
		raise PerceptionException("Cannot read mask "+path+": "+str(e))
	if img.mode not in ("L", "1", "P"):
		raise PerceptionException("Mask "+path+" must be single-channel, got mode "+img.mode)
	return np.asarray(img) != 0


@dataclass(frozen=True)
class SceneManifest:
	image_id: str
	image_path: str
	caption: str
	instances: Tuple[dict, ...]
	vocabulary: Optional[str]
	base_dir: str


def read_scene_manifest(path):
	with open(path, "r", encoding="utf-8") as f:
		data = yaml.safe_load(f)
	if not isinstance(data, dict) or "image" not in data or "instances" not in data:
		raise PerceptionException("Scene manifest "+str(path)+" needs image and instances")
	base_dir = os.path.dirname(os.path.abspath(path))
	image_id = str(data.get("image_id") or os.path.splitext(os.path.basename(str(data["image"])))[0])
	for inst in data["instances"]:
		if not isinstance(inst, dict) or "label" not in inst or "kind" not in inst:
			raise PerceptionException("Instance in "+str(path)+" needs label and kind")
		if "mask" not in inst and "rle" not in inst:
			raise PerceptionException("Instance "+repr(inst.get("label"))+" in "+str(path)+" has no mask or rle")
	vocab = data.get("vocabulary")
	return SceneManifest(image_id, os.path.join(base_dir, str(data["image"])), str(data.get("caption", "")),
						 tuple(data["instances"]), os.path.join(base_dir, vocab) if vocab else None, base_dir)


def perceive(manifest, grid, vocab, patch_fg_threshold=0.5, containment_threshold=0.5):
	"""Load every instance of a scene manifest and ground it on grid."""
	entities, subentities = [], []
	for inst in manifest.instances:
		mask = load_mask(inst["rle"] if "rle" in inst else inst["mask"], manifest.base_dir)
		if mask.shape != (grid.height, grid.width):
			raise PerceptionException("Mask for "+repr(inst["label"])+" has shape "+repr(mask.shape)+", image is "+repr((grid.height, grid.width)))
		instance = make_instance(str(inst["label"]), str(inst["kind"]), mask, grid, patch_fg_threshold)
		if instance.kind == "entity":
			entities.append(instance)
		else:
			subentities.append(instance)
	return ground_scene(grid, entities, subentities, vocab, containment_threshold, manifest.image_id)


def load_scene(manifest_path, patch_px, vocab=None, patch_fg_threshold=0.5, containment_threshold=0.5):
	"""Read a scene manifest and ground it on a grid of patch_px patches.

	vocab may be a loaded vocabulary, a YAML path or None for the one the
	manifest names. Returns (image, GroundedScene, manifest)."""
	manifest = read_scene_manifest(manifest_path)
	if vocab is None:
		vocab = manifest.vocabulary
		if not vocab:
			raise PerceptionException("Scene "+manifest.image_id+" has no vocabulary")
	if isinstance(vocab, str):
		vocab = load_vocabulary(vocab)
	try:
		img = load_png(manifest.image_path)
	except OSError as e:
		raise PerceptionException("Cannot read image "+manifest.image_path+": "+str(e))
	grid = PatchGrid.for_image(img.width, img.height, patch_px)
	return img, perceive(manifest, grid, vocab, patch_fg_threshold, containment_threshold), manifest
