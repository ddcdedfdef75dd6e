#!/usr/bin/env python
"""Curation of injected images: metric gate, judge-model filter and explanations.
"""

__author__ = "pyarti developers"
__date__ = "18 October 2026"

import logging
import os
import string
import time
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np
import yaml

from .grid import BBox
from .injection import ARTIFACT_TYPES, PixelImage
from .interfaces.vlm import HttpDistanceScorer, TransportException

try:
	import lpips
	import torch
except ImportError:
	lpips = None
	torch = None

TEMPLATE_DIR = os.path.join(os.path.dirname(os.path.abspath(__file__)), "templates")
PROMPT_KINDS = ("filter", "local", "global")
VLM_FILTERED_TYPES = ("duplication", "omission", "fusion")
MASK_FILL = 128


class CurationException(Exception):
	"""Represents a curation step that cannot complete."""
	def __init__(self, value):
		self.param = value
	def __str__(self):
		return repr(self.param)


@dataclass(frozen=True)
class FilterThresholds:
	tau1: float = 0.5
	tau2: float = 0.9

	def __post_init__(self):
		if not 0.0 <= self.tau1 < self.tau2 <= 1.0:
			raise CurationException("Thresholds need 0 <= tau1 < tau2 <= 1, got "+repr((self.tau1, self.tau2)))


@dataclass(frozen=True)
class GateDecision:
	keep: bool
	reason: str
	flagged: bool = False
	reply: Optional[str] = None


def metric_gate(d, thresholds):
	"""Keep when tau1 <= 1 - d <= tau2 (closed bounds)."""
	if d < 0 or np.isnan(d):
		raise CurationException("Perceptual distance must be >= 0, got "+repr(d))
	s = 1.0 - d
	if s > thresholds.tau2:
		return GateDecision(False, "too_similar")
	if s < thresholds.tau1:
		return GateDecision(False, "too_damaged")
	return GateDecision(True, "within_band")


def rms_patch_distance(a, b, patch_px):
	"""Mean over patch_px blocks of the RMS sample difference, scaled to [0, 1]."""
	a = np.asarray(a.data if isinstance(a, PixelImage) else a, dtype=np.float64)
	b = np.asarray(b.data if isinstance(b, PixelImage) else b, dtype=np.float64)
	if a.shape != b.shape:
		raise CurationException("Cannot compare images of shape "+repr(a.shape)+" and "+repr(b.shape))
	h, w = a.shape[:2]
	if h % patch_px or w % patch_px:
		raise CurationException("Image "+str(w)+"x"+str(h)+" is not tiled by "+str(patch_px)+" pixel patches")
	sq = ((a - b) / 255.0) ** 2
	blocks = sq.reshape(h // patch_px, patch_px, w // patch_px, patch_px, -1).mean(axis=(1, 3, 4))
	return float(np.sqrt(blocks).mean())



class LpipsDistance:
	"""Learned perceptual distance between two crops; 0 for identical crops.

	Crops are scaled to [-1, 1] and upsampled so the shorter side is at
	least min_side pixels before they reach the network.
	"""

	def __init__(self, net="alex", device="cpu", min_side=64):
		if lpips is None:
			raise CurationException("The lpips distance requires lpips and torch. Please install pyarti[lpips] and try again.")
		self.device = device
		self.min_side = min_side
		self.model = lpips.LPIPS(net=net, verbose=False).to(device).eval()

	def _tensor(self, image):
		data = np.asarray(image.data if isinstance(image, PixelImage) else image, dtype=np.float32)
		t = torch.from_numpy(data / 127.5 - 1.0).permute(2, 0, 1).unsqueeze(0)
		short = min(t.shape[2], t.shape[3])
		if short < self.min_side:
			size = (int(np.ceil(t.shape[2] * self.min_side / short)), int(np.ceil(t.shape[3] * self.min_side / short)))
			t = torch.nn.functional.interpolate(t, size=size, mode="bilinear", align_corners=False)
		return t.to(self.device)

	def __call__(self, a, b):
		sa = np.shape(a.data if isinstance(a, PixelImage) else a)
		sb = np.shape(b.data if isinstance(b, PixelImage) else b)
		if sa != sb:
			raise CurationException("Cannot compare images of shape "+repr(sa)+" and "+repr(sb))
		with torch.no_grad():
			return max(0.0, float(self.model(self._tensor(a), self._tensor(b)).item()))


DISTANCE_KINDS = ("rms", "http", "lpips")


def make_distance(cfg, patch_px):
	"""Distance function of the curation.distance config section."""
	kind = cfg.get("kind", "rms")
	if kind == "rms":
		return lambda a, b: rms_patch_distance(a, b, patch_px)
	if kind == "http":
		return HttpDistanceScorer(cfg.get("endpoint"), cfg.get("model"), cfg.get("api_key_env", "PYARTI_API_KEY"))
	if kind == "lpips":
		return LpipsDistance(cfg.get("net", "alex"), cfg.get("device", "cpu"))
	raise CurationException("Distance kind "+repr(kind)+" unknown.")


@dataclass(frozen=True)
class Triplet:
	masked_original: PixelImage
	cropped_original: PixelImage
	cropped_artifact: PixelImage
	region: BBox
	entity_name: str

	def images(self):
		return [self.masked_original, self.cropped_original, self.cropped_artifact]


def _check_bbox(bbox, img):
	x0, y0, x1, y1 = bbox
	if not (0 <= x0 < x1 <= img.width and 0 <= y0 < y1 <= img.height):
		raise CurationException("Region "+repr(tuple(bbox))+" outside "+str(img.width)+"x"+str(img.height)+" image")
	return BBox(int(x0), int(y0), int(x1), int(y1))


def build_triplet(original, artifact, target_bbox, entity_name, fill=MASK_FILL):
	if original.data.shape != artifact.data.shape:
		raise CurationException("Original and artifact images differ in size")
	box = _check_bbox(target_bbox, original)
	masked = original.data.copy()
	masked[box.y_min:box.y_max, box.x_min:box.x_max] = fill
	crop_o = original.data[box.y_min:box.y_max, box.x_min:box.x_max].copy()
	crop_a = artifact.data[box.y_min:box.y_max, box.x_min:box.x_max].copy()
	return Triplet(PixelImage(masked), PixelImage(crop_o), PixelImage(crop_a), box, entity_name)


def load_artifact_types(template_dir=None):
	with open(os.path.join(template_dir or TEMPLATE_DIR, "artifact_types.yaml"), "r", encoding="utf-8") as f:
		data = yaml.safe_load(f)
	return {k: v for k, v in data.items() if k in ARTIFACT_TYPES}


def load_template(kind, template_dir=None):
	"""Template body and its version header."""
	if kind not in PROMPT_KINDS:
		raise CurationException("Unknown prompt kind "+repr(kind))
	with open(os.path.join(template_dir or TEMPLATE_DIR, kind+".txt"), "r", encoding="utf-8") as f:
		header, _, body = f.read().partition("\n")
	if not header.startswith("pyarti-prompt "):
		raise CurationException("Template "+kind+".txt has no version header")
	return body, header.split()[1]


def format_bbox(bbox):
	return "["+", ".join(str(int(v)) for v in bbox)+"]"


def format_bbox_list(locals_):
	return "\n".join("- "+format_bbox(b)+": "+t for b, t in locals_)


def render_prompt(kind, artifact_type=None, entity="", bbox=None, bbox_list=(), template_dir=None):
	body, _ = load_template(kind, template_dir)
	values = {"entity": entity, "bbox": format_bbox(bbox) if bbox is not None else "",
			  "bbox_list": format_bbox_list(bbox_list), "artifact_type": artifact_type or "",
			  "artifact_type_description": "", "artifact_question": ""}
	if artifact_type is not None:
		types = load_artifact_types(template_dir)
		if artifact_type not in types:
			raise CurationException("No description for artifact type "+repr(artifact_type))
		values["artifact_type_description"] = " ".join(types[artifact_type]["description"].split())
		values["artifact_question"] = string.Formatter().vformat(types[artifact_type]["question"], (), {"entity": entity})
	return body.format(**values)


def parse_yes_no(reply):
	"""True/False for a bare yes/no reply, None for anything else."""
	if reply is None:
		return None
	token = reply.strip().strip("\"'*`").rstrip(".!").strip().lower()
	if token == "yes":
		return True
	if token == "no":
		return False
	return None


def call_with_retries(client, prompt, images, retries=3, backoff=0.5, sleep=time.sleep):
	"""Call client.complete, retrying TransportException with exponential backoff."""
	last = None
	for attempt in range(retries):
		try:
			return client.complete(prompt, images)
		except TransportException as e:
			last = e
			logging.warning("client call failed (attempt "+str(attempt + 1)+"/"+str(retries)+"): "+str(e))
			if attempt + 1 < retries:
				sleep(backoff * (2 ** attempt))
	raise TransportException("Client failed after "+str(retries)+" attempts: "+str(last))


def vlm_filter(triplet, artifact_type, client, retries=3, backoff=0.5, template_dir=None):
	if artifact_type not in VLM_FILTERED_TYPES:
		raise CurationException("The judge filter handles "+", ".join(VLM_FILTERED_TYPES)+", not "+repr(artifact_type))
	prompt = render_prompt("filter", artifact_type, triplet.entity_name, triplet.region, template_dir=template_dir)
	reply = call_with_retries(client, prompt, triplet.images(), retries, backoff)
	verdict = parse_yes_no(reply)
	if verdict is None:
		return GateDecision(False, "unparseable_reply", flagged=True, reply=reply)
	return GateDecision(verdict, "judge_yes" if verdict else "judge_no", reply=reply)


def _non_empty(reply, what):
	if reply is None or not reply.strip():
		raise CurationException("Empty "+what+" explanation from client")
	return reply.strip()


def local_explanation(triplet, artifact_type, client, retries=3, backoff=0.5, template_dir=None):
	prompt = render_prompt("local", artifact_type, triplet.entity_name, triplet.region, template_dir=template_dir)
	return _non_empty(call_with_retries(client, prompt, triplet.images(), retries, backoff), "local")


def global_explanation(artifact_image, locals_, client, retries=3, backoff=0.5, template_dir=None):
	if not locals_:
		raise CurationException("A global explanation needs at least one local explanation")
	prompt = render_prompt("global", bbox_list=locals_, template_dir=template_dir)
	return _non_empty(call_with_retries(client, prompt, [artifact_image], retries, backoff), "global")


@dataclass(frozen=True)
class ExplanationRecord:
	local: Tuple[Tuple[Tuple[int, int, int, int], str], ...] = ()
	global_text: str = ""
	caption: str = ""

	def to_dict(self):
		return {"local": [{"bbox": list(b), "text": t} for b, t in self.local],
				"global": self.global_text, "caption": self.caption}

	@classmethod
	def from_dict(cls, data):
		return cls(tuple((tuple(int(v) for v in e["bbox"]), e["text"]) for e in data.get("local", [])),
				   data.get("global", ""), data.get("caption", ""))


@dataclass
class CurationResult:
	"""Outcome of curating one injected image."""
	keep: bool
	route: str
	reason: str
	distance: Optional[float] = None
	flagged: bool = False
	explanations: ExplanationRecord = field(default_factory=ExplanationRecord)

	def to_dict(self):
		return {"keep": self.keep, "route": self.route, "reason": self.reason,
				"distance": self.distance, "flagged": self.flagged,
				"explanations": self.explanations.to_dict()}

	@classmethod
	def from_dict(cls, data):
		return cls(bool(data["keep"]), data["route"], data["reason"], data.get("distance"),
				   bool(data.get("flagged", False)), ExplanationRecord.from_dict(data.get("explanations", {})))


def curate(original, artifact, target_bbox, entity_name, artifact_type, client, thresholds,
		   distance_fn, caption="", retries=3, backoff=0.5, template_dir=None):
	"""Route one injected image through its gate and explain it if kept.

	Distortions go through the metric gate on the target crops, every other
	type through the judge-model filter.
	"""
	triplet = build_triplet(original, artifact, target_bbox, entity_name)
	distance = None
	if artifact_type in VLM_FILTERED_TYPES:
		route = "vlm"
		decision = vlm_filter(triplet, artifact_type, client, retries, backoff, template_dir)
	else:
		route = "metric"
		distance = float(distance_fn(triplet.cropped_original, triplet.cropped_artifact))
		decision = metric_gate(distance, thresholds)
	if not decision.keep:
		return CurationResult(False, route, decision.reason, distance, decision.flagged,
							  ExplanationRecord(caption=caption))
	text = local_explanation(triplet, artifact_type, client, retries, backoff, template_dir)
	locals_ = ((tuple(triplet.region.as_list()), text),)
	summary = global_explanation(artifact, locals_, client, retries, backoff, template_dir)
	return CurationResult(True, route, decision.reason, distance, False,
						  ExplanationRecord(locals_, summary, caption))
