#!/usr/bin/env python
"""Artifact records, VQA samples and their line-delimited storage.

Bounding boxes are pixel integers [x_min, y_min, x_max, y_max], half-open.
"""

__author__ = "pyarti developers"
__date__ = "18 October 2026"

import json
import logging
import os
import threading
from dataclasses import dataclass, field
from typing import Optional, Tuple

import yaml

from .curation import TEMPLATE_DIR, format_bbox
from .grid import TOOL_ARTIFACT_TYPES
from .toolbox import make_rng

RECORD_SCHEMA_VERSION = 1
SPLITS = ("clean", "artifact")


class DatasetException(Exception):
	"""Represents an incomplete record or an unreadable corpus file."""
	def __init__(self, value):
		self.param = value
	def __str__(self):
		return repr(self.param)


_templates = None


def vqa_templates():
	global _templates
	if _templates is None:
		with open(os.path.join(TEMPLATE_DIR, "vqa.yaml"), "r", encoding="utf-8") as f:
			_templates = yaml.safe_load(f)
	return _templates


def _bbox(b):
	return tuple(int(v) for v in b)


@dataclass(frozen=True)
class ArtifactRecord:
	injection_id: str
	source_image_id: str
	source_image: str
	artifact_image: str
	artifact_type: str
	tool: str
	mapping_path: str
	image_size: Tuple[int, int]
	bboxes: Tuple[Tuple[int, int, int, int], ...]
	local_explanations: Tuple[Tuple[Tuple[int, int, int, int], str], ...]
	global_explanation: str
	caption: str
	seed: int
	params: dict = field(default_factory=dict)
	subject: dict = field(default_factory=dict)
	schema_version: int = RECORD_SCHEMA_VERSION

	def __post_init__(self):
		if TOOL_ARTIFACT_TYPES.get(self.tool) != self.artifact_type:
			raise DatasetException("Artifact type "+repr(self.artifact_type)+" does not match tool "+repr(self.tool))
		w, h = self.image_size
		for b in self.bboxes:
			if not (0 <= b[0] < b[2] <= w and 0 <= b[1] < b[3] <= h):
				raise DatasetException("Bounding box "+repr(b)+" outside "+str(w)+"x"+str(h)+" image")
		boxes = set(self.bboxes)
		for b, _ in self.local_explanations:
			if b not in boxes:
				raise DatasetException("Local explanation box "+repr(b)+" is not a target box")

	def to_dict(self):
		return {
			"schema_version": self.schema_version,
			"injection_id": self.injection_id,
			"source_image_id": self.source_image_id,
			"source_image": self.source_image,
			"artifact_image": self.artifact_image,
			"artifact_type": self.artifact_type,
			"tool": self.tool,
			"mapping_path": self.mapping_path,
			"image_size": list(self.image_size),
			"bboxes": [list(b) for b in self.bboxes],
			"local_explanations": [{"bbox": list(b), "text": t} for b, t in self.local_explanations],
			"global_explanation": self.global_explanation,
			"caption": self.caption,
			"seed": self.seed,
			"params": self.params,
			"subject": self.subject,
		}

	@classmethod
	def from_dict(cls, data):
		if data.get("schema_version") != RECORD_SCHEMA_VERSION:
			raise DatasetException("Unsupported record schema "+repr(data.get("schema_version")))
		try:
			return cls(data["injection_id"], data["source_image_id"], data["source_image"], data["artifact_image"],
					   data["artifact_type"], data["tool"], data["mapping_path"], tuple(data["image_size"]),
					   tuple(_bbox(b) for b in data["bboxes"]),
					   tuple((_bbox(e["bbox"]), e["text"]) for e in data["local_explanations"]),
					   data["global_explanation"], data["caption"], int(data["seed"]),
					   data.get("params", {}), data.get("subject", {}), data["schema_version"])
		except (KeyError, TypeError) as e:
			raise DatasetException("Malformed record: missing "+str(e))


REQUIRED_FIELDS = ("injection_id", "source_image_id", "source_image", "artifact_image", "mapping_path",
				   "global_explanation", "caption")


def emit_record(injection_id, scene_entry, mapping_doc, curation, artifact_image, mapping_path):
	"""Assemble the record of one kept injection.

	scene_entry carries image_id, image path, caption and (width, height);
	curation is a kept CurationResult.
	"""
	if not curation.keep:
		raise DatasetException("Injection "+injection_id+" was rejected by curation")
	if mapping_doc.get("target_bbox") is None:
		raise DatasetException("Injection "+injection_id+" has no target region")
	expl = curation.explanations
	values = {"injection_id": injection_id, "source_image_id": scene_entry.get("image_id"),
			  "source_image": scene_entry.get("image"), "artifact_image": artifact_image,
			  "mapping_path": mapping_path, "global_explanation": expl.global_text, "caption": expl.caption}
	for name in REQUIRED_FIELDS:
		if not values[name]:
			raise DatasetException("Record "+injection_id+" is missing "+name)
	if not expl.local:
		raise DatasetException("Record "+injection_id+" is missing local explanations")
	return ArtifactRecord(
		injection_id=injection_id,
		source_image_id=values["source_image_id"],
		source_image=values["source_image"],
		artifact_image=artifact_image,
		artifact_type=mapping_doc["artifact_type"],
		tool=mapping_doc["tool"],
		mapping_path=mapping_path,
		image_size=tuple(int(v) for v in scene_entry["size"]),
		bboxes=(_bbox(mapping_doc["target_bbox"]),),
		local_explanations=tuple((_bbox(b), t) for b, t in expl.local),
		global_explanation=expl.global_text,
		caption=expl.caption,
		seed=int(mapping_doc["seed"]),
		params=mapping_doc.get("params", {}),
		subject=mapping_doc.get("subject") or {},
	)


@dataclass(frozen=True)
class VqaSample:
	image: str
	turns: Tuple[Tuple[str, str], ...]
	split: str
	injection_id: Optional[str] = None

	def __post_init__(self):
		if self.split not in SPLITS:
			raise DatasetException("Unknown VQA split "+repr(self.split))

	def to_dict(self):
		return {"image": self.image, "split": self.split, "injection_id": self.injection_id,
				"turns": [{"question": q, "answer": a} for q, a in self.turns]}

	@classmethod
	def from_dict(cls, data):
		return cls(data["image"], tuple((t["question"], t["answer"]) for t in data["turns"]),
				   data["split"], data.get("injection_id"))


def emit_vqa_clean(record):
	t = vqa_templates()
	turns = [(t["binary"], t["binary_clean_answer"])]
	subject = record.subject or {}
	if subject.get("subentity") and subject.get("bbox"):
		box = format_bbox(subject["bbox"])
		names = {"entity": subject["entity"], "subentity": subject["subentity"]}
		turns.append((t["locate"].format(**names), box))
		presence = [(t["presence"].format(bbox=box, **names), t["presence_answer"])]
		absent = subject.get("absent_bboxes") or []
		if absent:
			# one stream per injection
			rng = make_rng(record.seed, record.injection_id)
			other = format_bbox(absent[int(rng.integers(len(absent)))])
			presence.append((t["presence"].format(bbox=other, **names), t["presence_absent_answer"]))
			if rng.random() < 0.5:
				presence.reverse()
		turns.extend(presence)
	turns.append((t["describe_clean"], record.caption))
	return VqaSample(record.source_image, tuple(turns), "clean", record.injection_id)


def emit_vqa_artifact(record):
	t = vqa_templates()
	texts = dict(record.local_explanations)
	turns = [(t["binary"], t["binary_artifact_answer"]),
			 (t["artifact_boxes"], "["+", ".join(format_bbox(b) for b in record.bboxes)+"]")]
	for b in record.bboxes:
		turns.append((t["explain_region"].format(bbox=format_bbox(b)), texts[b]))
	turns.append((t["describe_artifacts"], record.global_explanation))
	return VqaSample(record.artifact_image, tuple(turns), "artifact", record.injection_id)


def dumps(document):
	return json.dumps(document, sort_keys=True, ensure_ascii=False)


class RecordWriter:
	"""Append-only JSONL writer that commits work units in index order.

	Workers hand in their lines with commit(index, lines); lines reach the
	files only once every lower index has been committed, so the files do
	not depend on completion order.
	"""

	def __init__(self, paths, append=False):
		self._paths = dict(paths)
		self._lock = threading.Lock()
		self._pending = {}
		self._next = 0
		for path in self._paths.values():
			if not append:
				open(path, "w", encoding="utf-8").close()

	def commit(self, index, lines):
		with self._lock:
			if index < self._next or index in self._pending:
				raise DatasetException("Work unit "+str(index)+" committed twice")
			unknown = set(lines) - set(self._paths)
			if unknown:
				raise DatasetException("Unknown streams "+repr(sorted(unknown)))
			self._pending[index] = lines
			while self._next in self._pending:
				self._flush(self._pending.pop(self._next))
				self._next += 1

	def _flush(self, lines):
		for name, documents in sorted(lines.items()):
			if documents:
				with open(self._paths[name], "a", encoding="utf-8") as f:
					for document in documents:
						f.write(dumps(document)+"\n")

	@property
	def committed(self):
		return self._next

	def close(self):
		with self._lock:
			if self._pending:
				raise DatasetException("Work units "+repr(sorted(self._pending))+" wait for a missing unit "+str(self._next))
		logging.info("RecordWriter committed "+str(self._next)+" work units")


def _read_jsonl(path):
	documents = []
	with open(path, "r", encoding="utf-8") as f:
		for n, line in enumerate(f, 1):
			if not line.strip():
				continue
			try:
				documents.append(json.loads(line))
			except ValueError:
				raise DatasetException(str(path)+" line "+str(n)+" is not valid JSON")
	return documents


def read_records(path):
	return [ArtifactRecord.from_dict(d) for d in _read_jsonl(path)]


def read_vqa(path):
	return [VqaSample.from_dict(d) for d in _read_jsonl(path)]
