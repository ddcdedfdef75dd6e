"""Synthetic corpora for the pyarti tests: images, PNG masks, manifests, vocabulary."""

import os

import numpy as np
import yaml
from PIL import Image

PATCH = 8
SIZE = 96

VOCABULARY = {
	"dog": [{"subentity": "leg", "level": "peripheral"}, {"subentity": "head", "level": "intermediate"}],
	"cat": [{"subentity": "ear", "level": "peripheral"}],
	"person": [{"subentity": "hand", "level": "peripheral"}, {"subentity": "torso", "level": "intermediate"}],
}

# name: caption, [(label, kind, (row0, row1), (col0, col1), color)] in inclusive patch units
LAYOUTS = {
	"dog": ("A brown dog standing on grass.", [
		("dog", "entity", (3, 8), (3, 8), (150, 100, 50)),
		("leg", "subentity", (8, 8), (4, 4), (120, 70, 30)),
		("head", "subentity", (3, 4), (3, 5), (170, 120, 70)),
	]),
	"pair": ("A cat sleeping against a dog.", [
		("cat", "entity", (2, 7), (2, 6), (90, 90, 90)),
		("dog", "entity", (4, 9), (5, 9), (160, 110, 60)),
		("ear", "subentity", (2, 2), (2, 3), (60, 60, 60)),
	]),
	"person": ("A person waving one hand.", [
		("person", "entity", (2, 10), (4, 7), (200, 160, 140)),
		("hand", "subentity", (9, 10), (4, 4), (220, 180, 160)),
		("torso", "subentity", (4, 7), (4, 7), (40, 80, 160)),
	]),
}


def rect_mask(rows, cols, shift=(0, 0), size=SIZE, patch=PATCH):
	mask = np.zeros((size, size), dtype=np.uint8)
	r0, r1 = rows[0] + shift[0], rows[1] + shift[0]
	c0, c1 = cols[0] + shift[1], cols[1] + shift[1]
	mask[r0 * patch:(r1 + 1) * patch, c0 * patch:(c1 + 1) * patch] = 255
	return mask


def render_image(instances, seed, shift=(0, 0), size=SIZE):
	rng = np.random.default_rng(seed)
	yy, xx = np.mgrid[0:size, 0:size]
	img = np.zeros((size, size, 3), dtype=np.float64)
	img[..., 0] = 40 + xx * 0.5
	img[..., 1] = 120 + yy * 0.4
	img[..., 2] = 60
	for _, _, rows, cols, color in instances:
		m = rect_mask(rows, cols, shift) > 0
		img[m] = color
	img += rng.integers(-12, 13, size=img.shape)
	return np.clip(img, 0, 255).astype(np.uint8)


def write_vocabulary(root):
	path = os.path.join(root, "vocabulary.yaml")
	with open(path, "w") as f:
		yaml.safe_dump(VOCABULARY, f)
	return path


def write_scene(root, image_id, layout, seed=0, shift=(0, 0)):
	"""Writes image, masks and scene manifest; returns the manifest path."""
	caption, instances = LAYOUTS[layout]
	scene_dir = os.path.join(root, image_id)
	os.makedirs(scene_dir, exist_ok=True)
	Image.fromarray(render_image(instances, seed, shift)).save(os.path.join(scene_dir, "image.png"))
	entries = []
	for k, (label, kind, rows, cols, _) in enumerate(instances):
		name = "mask_"+str(k)+".png"
		Image.fromarray(rect_mask(rows, cols, shift)).save(os.path.join(scene_dir, name))
		entries.append({"label": label, "kind": kind, "mask": name})
	manifest = {"image_id": image_id, "image": "image.png", "caption": caption, "instances": entries}
	path = os.path.join(scene_dir, "scene.yaml")
	with open(path, "w") as f:
		yaml.safe_dump(manifest, f)
	return path


def write_corpus(root, layouts):
	"""layouts: list of (image_id, layout, seed, shift). Returns (manifest, vocabulary) paths."""
	os.makedirs(root, exist_ok=True)
	vocab = write_vocabulary(root)
	scenes = [os.path.relpath(write_scene(root, *entry), root) for entry in layouts]
	manifest = os.path.join(root, "manifest.yaml")
	with open(manifest, "w") as f:
		yaml.safe_dump({"scenes": scenes}, f)
	return manifest, vocab


THREE_IMAGES = [("img_dog", "dog", 1, (0, 0)), ("img_pair", "pair", 2, (0, 0)), ("img_person", "person", 3, (0, 0))]
FIVE_IMAGES = THREE_IMAGES + [("img_dog_b", "dog", 4, (1, 1)), ("img_pair_b", "pair", 5, (1, 0))]


def pipeline_data(manifest, vocab, output, **extra):
	"""Config document for a fast run with an always-yes mock judge and an open metric gate."""
	data = {
		"manifest": manifest,
		"output": output,
		"seed": 7,
		"workers": 2,
		"injections_per_image": 0,
		"grid": {"patch_px": PATCH},
		"perception": {"vocabulary": vocab},
		"curation": {"tau1": 0.0, "tau2": 1.0, "backoff": 0.0},
		"injection": {"verify": {"dim": 8}},
	}
	data.update(extra)
	return data
