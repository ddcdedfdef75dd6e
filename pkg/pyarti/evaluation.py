#!/usr/bin/env python
"""Benchmark scoring: binary detection, localization and explanations.

All region formats (boxes, polygons, heatmaps) are unified into
per-pixel binary maps before localization is scored.
"""

__author__ = "pyarti developers"
__date__ = "18 October 2026"

import json
import logging
import math
import os
import string
from dataclasses import dataclass, field

import numpy as np
from PIL import Image

REGION_KINDS = ("bbox", "polygon", "heatmap")
AGGREGATION_MODES = ("per_image", "micro")

_PUNCT = str.maketrans("", "", string.punctuation)


class EvaluationException(Exception):
	"""Represents malformed geometry or mismatched evaluation inputs."""
	def __init__(self, value):
		self.param = value
	def __str__(self):
		return repr(self.param)


@dataclass(frozen=True)
class RegionAnnotation:
	kind: str
	payload: object = field(repr=False)
	width: int
	height: int

	def __post_init__(self):
		if self.kind not in REGION_KINDS:
			raise EvaluationException("Unknown region kind "+repr(self.kind))
		if self.width < 1 or self.height < 1:
			raise EvaluationException("Region image size must be positive")


@dataclass(frozen=True)
class BinaryPixelMap:
	width: int
	height: int
	bits: np.ndarray = field(repr=False, compare=False)

	def __post_init__(self):
		bits = np.asarray(self.bits, dtype=bool)
		if bits.shape != (self.height, self.width):
			raise EvaluationException("Map bits "+repr(bits.shape)+" do not match "+str(self.width)+"x"+str(self.height))
		object.__setattr__(self, "bits", bits)

	@classmethod
	def empty(cls, width, height):
		return cls(width, height, np.zeros((height, width), dtype=bool))

	def count(self):
		return int(self.bits.sum())

	def union(self, other):
		_same_dims(self, other)
		return BinaryPixelMap(self.width, self.height, self.bits | other.bits)


def _same_dims(a, b):
	if (a.width, a.height) != (b.width, b.height):
		raise EvaluationException("Map sizes differ: "+str(a.width)+"x"+str(a.height)+" vs "+str(b.width)+"x"+str(b.height))


def _rasterize_bbox(payload, w, h):
	try:
		x0, y0, x1, y1 = [int(v) for v in payload]
	except (TypeError, ValueError):
		raise EvaluationException("Bounding box must be four integers, got "+repr(payload))
	if not (0 <= x0 <= x1 <= w and 0 <= y0 <= y1 <= h):
		raise EvaluationException("Bounding box "+repr(payload)+" outside "+str(w)+"x"+str(h)+" image")
	bits = np.zeros((h, w), dtype=bool)
	bits[y0:y1, x0:x1] = True
	return bits


def _rasterize_polygon(payload, w, h):
	"""Even-odd fill sampled at pixel centers."""
	pts = np.asarray(payload, dtype=np.float64)
	if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 3 or not np.all(np.isfinite(pts)):
		raise EvaluationException("Polygon needs at least three finite (x, y) vertices")
	ys, xs = np.mgrid[0:h, 0:w]
	px = xs + 0.5
	py = ys + 0.5
	inside = np.zeros((h, w), dtype=bool)
	nxt = np.roll(pts, -1, axis=0)
	for (xa, ya), (xb, yb) in zip(pts, nxt):
		if ya == yb:
			continue
		crosses = (ya > py) != (yb > py)
		x_at = xa + (py - ya) * (xb - xa) / (yb - ya)
		inside ^= crosses & (px < x_at)
	return inside


def _load_heatmap(payload):
	if isinstance(payload, str):
		if payload.endswith(".npy"):
			return np.load(payload)
		with Image.open(payload) as img:
			return np.asarray(img.convert("L"), dtype=np.float64) / 255.0
	return np.asarray(payload, dtype=np.float64)


def rasterize(region, heat_threshold=0.5):
	w, h = region.width, region.height
	if region.kind == "bbox":
		bits = _rasterize_bbox(region.payload, w, h)
	elif region.kind == "polygon":
		bits = _rasterize_polygon(region.payload, w, h)
	else:
		heat = _load_heatmap(region.payload)
		if heat.shape != (h, w):
			raise EvaluationException("Heatmap "+repr(heat.shape)+" does not match "+str(w)+"x"+str(h))
		if np.any(heat < 0) or np.any(heat > 1) or not np.all(np.isfinite(heat)):
			raise EvaluationException("Heatmap values must lie in [0, 1]")
		bits = heat >= heat_threshold
	return BinaryPixelMap(w, h, bits)


def _confusion(pred, gt):
	_same_dims(pred, gt)
	tp = int(np.sum(pred.bits & gt.bits))
	fp = int(np.sum(pred.bits & ~gt.bits))
	fn = int(np.sum(~pred.bits & gt.bits))
	return tp, fp, fn


def _scores(tp, fp, fn):
	if tp + fp + fn == 0:
		return 1.0, 1.0
	return tp / (tp + fp + fn), 2.0 * tp / (2.0 * tp + fp + fn)


def localization_metrics(pred, gt):
	"""(iou, f1) over pixels; both empty counts as a perfect match."""
	return _scores(*_confusion(pred, gt))


def aggregate_localization(pairs, mode="per_image"):
	"""Aggregate over the pairs whose ground truth has any positive pixel."""
	if mode not in AGGREGATION_MODES:
		raise EvaluationException("Unknown localization aggregation "+repr(mode))
	positive = [(p, g) for p, g in pairs if g.count() > 0]
	if not positive:
		return {"iou": None, "f1": None, "n": 0, "mode": mode}
	if mode == "micro":
		tp = fp = fn = 0
		for p, g in positive:
			a, b, c = _confusion(p, g)
			tp, fp, fn = tp + a, fp + b, fn + c
		iou, f1 = _scores(tp, fp, fn)
	else:
		scores = [localization_metrics(p, g) for p, g in positive]
		iou = sum(s[0] for s in scores) / len(scores)
		f1 = sum(s[1] for s in scores) / len(scores)
	return {"iou": iou, "f1": f1, "n": len(positive), "mode": mode}


def _class_f1(preds, gts, cls):
	tp = sum(1 for p, g in zip(preds, gts) if p == cls and g == cls)
	fp = sum(1 for p, g in zip(preds, gts) if p == cls and g != cls)
	fn = sum(1 for p, g in zip(preds, gts) if p != cls and g == cls)
	if 2 * tp + fp + fn == 0:
		return 0.0
	return 2.0 * tp / (2 * tp + fp + fn)


def binary_metrics(preds, gts):
	"""(accuracy, macro F1 over the yes and no classes)."""
	preds = [bool(p) for p in preds]
	gts = [bool(g) for g in gts]
	if len(preds) != len(gts):
		raise EvaluationException("Got "+str(len(preds))+" predictions for "+str(len(gts))+" labels")
	if not gts:
		raise EvaluationException("Binary metrics of an empty set")
	accuracy = sum(1 for p, g in zip(preds, gts) if p == g) / len(gts)
	return accuracy, (_class_f1(preds, gts, True) + _class_f1(preds, gts, False)) / 2.0


def tokenize(text):
	if not text:
		return []
	return text.lower().translate(_PUNCT).split()


def lcs_length(xs, ys):
	dp = [0] * (len(ys) + 1)
	for x in xs:
		prev = 0
		for j, y in enumerate(ys, 1):
			tmp = dp[j]
			dp[j] = prev + 1 if x == y else max(dp[j], dp[j - 1])
			prev = tmp
	return dp[len(ys)]


def rouge_l(pred, ref):
	pred_t, ref_t = tokenize(pred), tokenize(ref)
	if not pred_t or not ref_t:
		return 0.0
	lcs = lcs_length(pred_t, ref_t)
	if lcs == 0:
		return 0.0
	p = lcs / len(pred_t)
	r = lcs / len(ref_t)
	return 2 * p * r / (p + r)


def css(pred, ref, embedder):
	"""Cosine similarity of the two sentence embeddings."""
	try:
		a = np.asarray(embedder.embed(pred), dtype=np.float64)
		b = np.asarray(embedder.embed(ref), dtype=np.float64)
	except Exception as e:
		raise EvaluationException("Embedder failed: "+str(e))
	if a.shape != b.shape:
		raise EvaluationException("Embeddings differ in shape")
	na, nb = np.linalg.norm(a), np.linalg.norm(b)
	if na == 0 or nb == 0:
		raise EvaluationException("Cosine similarity of a zero embedding")
	return float(np.clip(np.dot(a, b) / (na * nb), -1.0, 1.0))


def parse_label(value):
	if isinstance(value, bool):
		return value
	token = str(value).strip().rstrip(".").lower()
	if token in ("yes", "true", "1", "artifact"):
		return True
	if token in ("no", "false", "0", "clean"):
		return False
	raise EvaluationException("Cannot read a yes/no label from "+repr(value))


def _image_size(entry):
	if "size" in entry:
		return tuple(int(v) for v in entry["size"])
	if os.path.exists(entry["image"]):
		with Image.open(entry["image"]) as img:
			return img.size
	raise EvaluationException("No size for "+repr(entry["image"])+" and the image is not readable")


def read_jsonl(path):
	with open(path, "r", encoding="utf-8") as f:
		return [json.loads(line) for line in f if line.strip()]


def read_ground_truth(path):
	"""Benchmark entries from a records file or an external benchmark manifest.

	Records contribute one positive entry per artifact image and one
	negative entry per distinct source image.
	"""
	entries = []
	seen_sources = set()
	for doc in read_jsonl(path):
		if "injection_id" in doc:
			size = tuple(doc["image_size"])
			entries.append({"image": doc["artifact_image"], "label": True, "bboxes": doc["bboxes"],
							"explanation": doc["global_explanation"], "size": size})
			if doc["source_image"] not in seen_sources:
				seen_sources.add(doc["source_image"])
				entries.append({"image": doc["source_image"], "label": False, "bboxes": [],
								"explanation": "", "size": size})
		else:
			entries.append({"image": doc["image"], "label": parse_label(doc["label"]),
							"bboxes": doc.get("bboxes", []), "explanation": doc.get("explanation", ""),
							"size": _image_size(doc)})
	return entries


def _prediction_map(pred, w, h, heat_threshold):
	out = BinaryPixelMap.empty(w, h)
	regions = list(pred.get("regions", []))
	regions += [{"kind": "bbox", "payload": b} for b in pred.get("bboxes", [])]
	for region in regions:
		out = out.union(rasterize(RegionAnnotation(region["kind"], region["payload"], w, h), heat_threshold))
	return out


def evaluate_benchmark(predictions, ground_truth, embedder=None, heat_threshold=0.5, mode="per_image"):
	"""Per-sample rows plus binary, localization and explanation aggregates.

	predictions maps image path to {label, bboxes | regions, explanation};
	a missing prediction counts as "no" with no region and no text.
	"""
	rows, loc_pairs = [], []
	preds, gts = [], []
	rouge, cos = [], []
	for entry in ground_truth:
		w, h = entry["size"]
		pred = predictions.get(entry["image"])
		if pred is None:
			logging.warning("stage=evaluate image="+str(entry["image"])+" decision=missing reason=no_prediction")
			pred = {"label": False}
		label = parse_label(pred.get("label", False))
		preds.append(label)
		gts.append(entry["label"])
		row = {"image": entry["image"], "label": entry["label"], "pred": label}
		if entry["label"]:
			gt_map = BinaryPixelMap.empty(w, h)
			for b in entry["bboxes"]:
				gt_map = gt_map.union(rasterize(RegionAnnotation("bbox", b, w, h)))
			pred_map = _prediction_map(pred, w, h, heat_threshold)
			loc_pairs.append((pred_map, gt_map))
			if gt_map.count():
				row["iou"], row["f1"] = localization_metrics(pred_map, gt_map)
			if entry.get("explanation"):
				text = pred.get("explanation", "")
				row["rouge_l"] = rouge_l(text, entry["explanation"])
				rouge.append(row["rouge_l"])
				if embedder is not None and text:
					row["css"] = css(text, entry["explanation"], embedder)
					cos.append(row["css"])
		rows.append(row)
	report = {"samples": rows, "localization": aggregate_localization(loc_pairs, mode)}
	if gts:
		accuracy, macro_f1 = binary_metrics(preds, gts)
		report["binary"] = {"accuracy": accuracy, "macro_f1": macro_f1, "n": len(gts)}
	else:
		report["binary"] = {"accuracy": None, "macro_f1": None, "n": 0}
	report["explanation"] = {"rouge_l": sum(rouge) / len(rouge) if rouge else None,
							 "css": sum(cos) / len(cos) if cos else None, "n": len(rouge)}
	return report


def read_predictions(path):
	return {doc["image"]: doc for doc in read_jsonl(path)}


def write_report(report, path):
	with open(path, "w", encoding="utf-8") as f:
		json.dump(report, f, sort_keys=True, indent=1)
		f.write("\n")


def summary_lines(report):
	"""One line per task, for the CLI."""
	def fmt(v):
		return "n/a" if v is None or (isinstance(v, float) and math.isnan(v)) else "%.4f" % v
	b, l, e = report["binary"], report["localization"], report["explanation"]
	return ["binary       n="+str(b["n"])+" accuracy="+fmt(b["accuracy"])+" macro_f1="+fmt(b["macro_f1"]),
			"localization n="+str(l["n"])+" iou="+fmt(l["iou"])+" f1="+fmt(l["f1"])+" mode="+l["mode"],
			"explanation  n="+str(e["n"])+" rouge_l="+fmt(e["rouge_l"])+" css="+fmt(e["css"])]
