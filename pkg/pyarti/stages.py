#!/usr/bin/env python
"""Pipeline stages and the end-to-end run.

Every stage works on one image at a time and leaves its result in the
output directory, so each stage can be re-run on its own:

	scenes/<image>.json        grounded scene summary         (perceive)
	plans/<image>.json         planned injections             (synthesize)
	mappings/<injection>.json  mapping export                 (synthesize)
	artifacts/<injection>.png  injected image, .json sidecar  (inject)
	curation/<injection>.json  gate decision, explanations    (curate)
	records.jsonl, vqa_*.jsonl, summary.json                  (emit)

Re-running a stage deletes whatever later stages derived from its old
output.  Each curation outcome keeps the sha256 of the artifact image it
judged, and emit skips outcomes whose image has changed since.
"""

__author__ = "pyarti developers"
__date__ = "18 October 2026"

import hashlib
import json
import logging
import os
import threading

from PIL import Image, ImageDraw

from . import interfaces
from .config import read_input_manifest
from .curation import CurationException, CurationResult, curate, make_distance
from .dataset import DatasetException, RecordWriter, emit_record, emit_vqa_artifact, emit_vqa_clean, read_records
from .evaluation import evaluate_benchmark, read_ground_truth, read_predictions, write_report
from .grid import GridException, patch_pixel_rect
from .injection import (InjectionException, load_png, render_pixel_oracle, save_png,
						schedule_metadata, verify_mapping)
from .interfaces.vlm import ClientException, TransportException
from .master import PyArti_Master
from .perception import (PerceptionException, load_scene, load_vocabulary, overlapping_entity_pairs,
						 read_scene_manifest, scene_from_dict)
from .toolbox import (ToolException, candidate_subject, export_mapping, make_rng, plan_injections,
					  read_mapping, run_tool, write_mapping)

OUTPUT_DIRS = ("scenes", "plans", "mappings", "artifacts", "curation", "overlays")
STREAMS = {"records": "records.jsonl", "vqa_clean": "vqa_clean.jsonl", "vqa_artifact": "vqa_artifact.jsonl"}
COUNTS = ("attempted", "injected", "filtered_by_metric", "filtered_by_vlm", "failed", "emitted",
		  "images", "images_ok", "images_failed")


def event(stage, image, decision, reason, level=logging.INFO):
	logging.log(level, "stage="+stage+" image="+str(image)+" decision="+decision+" reason="+str(reason))


def write_json(path, document):
	with open(path, "w", encoding="utf-8") as f:
		json.dump(document, f, sort_keys=True, indent=1)
		f.write("\n")


def read_json(path):
	with open(path, "r", encoding="utf-8") as f:
		return json.load(f)


class PipelineContext:
	"""Shared, read-only state of one pipeline invocation."""

	def __init__(self, config):
		self.config = config
		self.out = config.output
		self.seed = config.seed
		self.patch_px = config.patch_px
		self.params = config.tool_params()
		self.schedule = config.schedule()
		self.thresholds = config.thresholds()
		self._client = None
		self._distance = None
		self._lock = threading.Lock()

	def path(self, *parts):
		return os.path.join(self.out, *parts)

	def make_dirs(self):
		for name in OUTPUT_DIRS:
			os.makedirs(self.path(name), exist_ok=True)

	@property
	def client(self):
		with self._lock:
			if self._client is None:
				cfg = dict(self.config["curation"]["client"])
				cfg["transcript"] = self.config.resolve(cfg.get("transcript"))
				self._client = interfaces.get_client(cfg, self.config.resolve(cfg.get("record")))
			return self._client

	@property
	def distance_fn(self):
		with self._lock:
			if self._distance is None:
				self._distance = make_distance(self.config["curation"]["distance"], self.patch_px)
			return self._distance

	def vocabulary_for(self, manifest):
		path = manifest.vocabulary or self.config.resolve(self.config["perception"]["vocabulary"])
		if not path:
			raise PerceptionException("Scene "+manifest.image_id+" has no vocabulary")
		return load_vocabulary(path)


def _remove(path):
	if os.path.exists(path):
		os.remove(path)


def _clear_injection(ctx, injection_id, mapping=False):
	"""Delete what inject and curate wrote for one injection."""
	if mapping:
		_remove(ctx.path("mappings", injection_id+".json"))
	for parts in (("artifacts", injection_id+".png"), ("artifacts", injection_id+".json"),
				  ("curation", injection_id+".json")):
		_remove(ctx.path(*parts))


def _clear_plan(ctx, image_id):
	"""Delete the plan of an image and every file derived from it."""
	path = ctx.path("plans", image_id+".json")
	if os.path.exists(path):
		for entry in read_json(path)["injections"]:
			_clear_injection(ctx, entry["injection_id"], mapping=True)
		os.remove(path)


def file_digest(path):
	with open(path, "rb") as f:
		return hashlib.sha256(f.read()).hexdigest()


def perceive_image(ctx, scene_path):
	manifest = read_scene_manifest(scene_path)
	image_id = manifest.image_id
	_remove(ctx.path("scenes", image_id+".json"))
	_clear_plan(ctx, image_id)
	p = ctx.config["perception"]
	img, scene, _ = load_scene(scene_path, ctx.patch_px, ctx.vocabulary_for(manifest),
							   float(p["patch_fg_threshold"]), float(p["containment_threshold"]))
	doc = scene.to_dict()
	doc.update({"image_id": image_id, "image": manifest.image_path, "caption": manifest.caption,
				"size": [img.width, img.height]})
	write_json(ctx.path("scenes", image_id+".json"), doc)
	event("perceive", image_id, "grounded", "entities="+str(len(scene.entities))+" subentities="+str(len(scene.subentities)))
	return image_id


def synthesize_image(ctx, image_id):
	doc = read_json(ctx.path("scenes", image_id+".json"))
	_clear_plan(ctx, image_id)
	scene = scene_from_dict(doc)
	pairs = overlapping_entity_pairs(scene)
	planned = plan_injections(scene, ctx.config["tools"], pairs, make_rng(ctx.seed, image_id, 0),
							  int(ctx.config["injections_per_image"]))
	entries = []
	for k, candidate in enumerate(planned):
		injection_id = image_id+"-"+str(k)
		entry = {"injection_id": injection_id, "index": k, "candidate": candidate.describe(), "tool": candidate.tool}
		try:
			mapping = run_tool(candidate, scene, ctx.params, make_rng(ctx.seed, image_id, 2 * k + 1))
			document = export_mapping(mapping, ctx.seed, ctx.params.snapshot(candidate.tool),
									  candidate_subject(candidate, scene),
									  schedule_metadata(ctx.schedule, mapping.artifact_type), image_id, injection_id)
			write_mapping(ctx.path("mappings", injection_id+".json"), document)
			if mapping.pairs:
				entry.update(status="ok", reason="pairs="+str(len(mapping)))
			else:
				entry.update(status="failed", reason="empty_mapping")
		except (ToolException, GridException) as e:
			entry.update(status="failed", reason=str(e))
		event("synthesize", injection_id, entry["status"], entry["reason"],
			  logging.INFO if entry["status"] == "ok" else logging.WARNING)
		entries.append(entry)
	if not planned:
		event("synthesize", image_id, "skip", "no_candidates", logging.WARNING)
	write_json(ctx.path("plans", image_id+".json"), {"image_id": image_id, "injections": entries})
	return entries


def _ok_entries(ctx, image_id):
	plan = read_json(ctx.path("plans", image_id+".json"))
	return [e for e in plan["injections"] if e["status"] == "ok"]


def inject_image(ctx, image_id):
	doc = read_json(ctx.path("scenes", image_id+".json"))
	original = load_png(doc["image"])
	inj = ctx.config["injection"]
	for entry in _ok_entries(ctx, image_id):
		injection_id = entry["injection_id"]
		_clear_injection(ctx, injection_id)
		sidecar = {"injection_id": injection_id}
		try:
			mapping, _ = read_mapping(ctx.path("mappings", injection_id+".json"))
			artifact = render_pixel_oracle(original, mapping, int(inj["blend"]))
			save_png(artifact, ctx.path("artifacts", injection_id+".png"))
			verification = None
			if inj["verify"]["enabled"]:
				rng = make_rng(ctx.seed, image_id, 2 * entry["index"] + 2)
				verification = verify_mapping(mapping, ctx.schedule, mapping.artifact_type, rng,
											  int(inj["verify"]["dim"]), float(inj["verify"]["rope_base"]))
			sidecar.update(status="ok", artifact="artifacts/"+injection_id+".png", blend=int(inj["blend"]),
						   verification=verification, sha256=file_digest(ctx.path("artifacts", injection_id+".png")))
			event("inject", injection_id, "rendered", "pairs="+str(len(mapping)))
		except (ToolException, InjectionException, GridException, OSError) as e:
			sidecar.update(status="failed", reason=str(e))
			event("inject", injection_id, "failed", e, logging.ERROR)
		write_json(ctx.path("artifacts", injection_id+".json"), sidecar)


def _entity_name(subject):
	if subject.get("other_entity"):
		return subject["entity"]+" and "+subject["other_entity"]
	return subject.get("entity") or "object"


def curate_image(ctx, image_id):
	doc = read_json(ctx.path("scenes", image_id+".json"))
	original = load_png(doc["image"])
	c = ctx.config["curation"]
	for entry in _ok_entries(ctx, image_id):
		injection_id = entry["injection_id"]
		_remove(ctx.path("curation", injection_id+".json"))
		sidecar = _read_if(ctx.path("artifacts", injection_id+".json"))
		if sidecar is None or sidecar["status"] != "ok":
			continue
		outcome = {"injection_id": injection_id, "artifact_sha256": sidecar.get("sha256")}
		try:
			_, mdoc = read_mapping(ctx.path("mappings", injection_id+".json"))
			artifact = load_png(ctx.path("artifacts", injection_id+".png"))
			result = curate(original, artifact, mdoc["target_bbox"], _entity_name(mdoc["subject"] or {}),
							mdoc["artifact_type"], ctx.client, ctx.thresholds, ctx.distance_fn, doc["caption"],
							int(c["retries"]), float(c["backoff"]), ctx.config.resolve(c["template_dir"]))
			outcome.update(status="ok", **result.to_dict())
			event("curate", injection_id, "keep" if result.keep else "reject", result.reason,
				  logging.INFO if result.keep else logging.WARNING)
		except (CurationException, TransportException, ClientException, ToolException, OSError) as e:
			outcome.update(status="failed", reason=str(e))
			event("curate", injection_id, "failed", e, logging.ERROR)
		write_json(ctx.path("curation", injection_id+".json"), outcome)


def process_image(ctx, scene_path):
	"""Work unit of a full run: every per-image stage in order."""
	image_id = perceive_image(ctx, scene_path)
	synthesize_image(ctx, image_id)
	inject_image(ctx, image_id)
	curate_image(ctx, image_id)
	return image_id


def _read_if(path):
	return read_json(path) if os.path.exists(path) else None


def _curated_current(ctx, sidecar, outcome):
	"""Whether the curation outcome was made for the artifact image now on disk."""
	digest = sidecar.get("sha256")
	if not digest or outcome.get("artifact_sha256") != digest:
		return False
	try:
		return file_digest(ctx.path(sidecar["artifact"])) == digest
	except OSError:
		return False


def emit_image(ctx, scene_path, seen=None):
	"""Record and VQA lines of one image plus its summary counts."""
	counts = dict.fromkeys(COUNTS, 0)
	counts["images"] = 1
	lines = {name: [] for name in STREAMS}
	try:
		image_id = read_scene_manifest(scene_path).image_id
	except (PerceptionException, OSError) as e:
		counts["images_failed"] = 1
		event("emit", scene_path, "failed", e, logging.ERROR)
		return lines, counts
	if seen is not None:
		if image_id in seen:
			counts["images_failed"] = 1
			event("emit", image_id, "failed", "duplicate_image_id", logging.ERROR)
			return lines, counts
		seen.add(image_id)
	scene_doc = _read_if(ctx.path("scenes", image_id+".json"))
	plan = _read_if(ctx.path("plans", image_id+".json"))
	if scene_doc is None or plan is None:
		counts["images_failed"] = 1
		event("emit", image_id, "failed", "missing_scene_or_plan", logging.ERROR)
		return lines, counts
	counts["images_ok"] = 1
	for entry in plan["injections"]:
		injection_id = entry["injection_id"]
		counts["attempted"] += 1
		sidecar = _read_if(ctx.path("artifacts", injection_id+".json"))
		if entry["status"] != "ok" or sidecar is None or sidecar["status"] != "ok":
			counts["failed"] += 1
			continue
		counts["injected"] += 1
		outcome = _read_if(ctx.path("curation", injection_id+".json"))
		if outcome is None or outcome["status"] != "ok":
			counts["failed"] += 1
			continue
		if not _curated_current(ctx, sidecar, outcome):
			counts["failed"] += 1
			event("emit", injection_id, "failed", "stale_curation", logging.WARNING)
			continue
		result = CurationResult.from_dict(outcome)
		if not result.keep:
			counts["filtered_by_metric" if result.route == "metric" else "filtered_by_vlm"] += 1
			event("emit", injection_id, "drop", result.reason)
			continue
		try:
			mapping_path = "mappings/"+injection_id+".json"
			_, mdoc = read_mapping(ctx.path(mapping_path))
			record = emit_record(injection_id, scene_doc, mdoc, result, sidecar["artifact"], mapping_path)
		except (DatasetException, ToolException) as e:
			counts["failed"] += 1
			event("emit", injection_id, "failed", e, logging.ERROR)
			continue
		lines["records"].append(record.to_dict())
		lines["vqa_clean"].append(emit_vqa_clean(record).to_dict())
		lines["vqa_artifact"].append(emit_vqa_artifact(record).to_dict())
		counts["emitted"] += 1
		event("emit", injection_id, "emit", record.artifact_type)
	return lines, counts


def _writer(ctx):
	return RecordWriter({name: ctx.path(fname) for name, fname in STREAMS.items()})


def _finish(ctx, writer, totals):
	writer.close()
	write_json(ctx.path("summary.json"), totals)
	logging.info("Run summary: "+" ".join(k+"="+str(totals[k]) for k in COUNTS))
	return totals


def emit_all(ctx, scene_paths):
	writer = _writer(ctx)
	totals = dict.fromkeys(COUNTS, 0)
	seen = set()
	for index, scene_path in enumerate(scene_paths):
		lines, counts = emit_image(ctx, scene_path, seen)
		writer.commit(index, lines)
		for k in COUNTS:
			totals[k] += counts[k]
	return _finish(ctx, writer, totals)


def _master(ctx, loglevel):
	return PyArti_Master(interfaces.get_interface(ctx.config.workers), loglevel=loglevel)


def _stage_unit(stage, ctx, scene_path):
	if stage == "perceive":
		return perceive_image(ctx, scene_path)
	image_id = read_scene_manifest(scene_path).image_id
	if stage == "synthesize":
		return synthesize_image(ctx, image_id)
	if stage == "inject":
		return inject_image(ctx, image_id)
	if stage == "curate":
		return curate_image(ctx, image_id)
	raise ValueError("Unknown stage "+repr(stage))


def _run_units(ctx, scene_paths, executable, extra, loglevel, on_result=None):
	master = _master(ctx, loglevel)
	tasks = [master.submit_task(executable, extra+(ctx, path), name="image_"+str(i))
			 for i, path in enumerate(scene_paths)]
	failures = 0
	for index, (path, task) in enumerate(zip(scene_paths, tasks)):
		try:
			done, _ = master.get_result(task)
			event("run", path, "done", "seconds=%.3f" % done.get_total_time(), logging.DEBUG)
		except Exception as e:
			failures += 1
			event("run", path, "failed", e, logging.ERROR)
		if on_result:
			on_result(index, path)
	return failures


def run_stage(config, stage, loglevel=logging.CRITICAL):
	"""Run one per-image stage over the manifest; returns the number of failed images."""
	ctx = PipelineContext(config)
	ctx.make_dirs()
	scene_paths = read_input_manifest(config.manifest)
	if stage == "emit":
		return emit_all(ctx, scene_paths)
	return _run_units(ctx, scene_paths, _stage_unit, (stage,), loglevel)


def run_pipeline(config, loglevel=logging.CRITICAL):
	"""Full run; per-image work units in parallel, outputs committed in manifest order."""
	ctx = PipelineContext(config)
	ctx.make_dirs()
	scene_paths = read_input_manifest(config.manifest)
	writer = _writer(ctx)
	totals = dict.fromkeys(COUNTS, 0)
	seen = set()

	def commit(index, path):
		lines, counts = emit_image(ctx, path, seen)
		writer.commit(index, lines)
		for k in COUNTS:
			totals[k] += counts[k]
	_run_units(ctx, scene_paths, process_image, (), loglevel, commit)
	return _finish(ctx, writer, totals)


TARGET_COLOR = (255, 0, 0)
REFERENCE_COLOR = (0, 0, 255)


def render_overlays(record, out_dir):
	"""Artifact image with target patches outlined red and references blue."""
	mapping, _ = read_mapping(os.path.join(out_dir, record.mapping_path))
	path = os.path.join(out_dir, record.artifact_image)
	if not os.path.exists(path):
		raise OSError("Missing artifact image "+path)
	with Image.open(path) as src:
		img = src.convert("RGB")
	draw = ImageDraw.Draw(img)
	for coords, color in ((mapping.references, REFERENCE_COLOR), (mapping.targets, TARGET_COLOR)):
		for c in sorted(coords):
			r = patch_pixel_rect(c, mapping.grid)
			draw.rectangle([r.x_min, r.y_min, r.x_max - 1, r.y_max - 1], outline=color)
	target = os.path.join(out_dir, "overlays", record.injection_id+".png")
	os.makedirs(os.path.dirname(target), exist_ok=True)
	img.save(target, format="PNG")
	return target


def overlay_all(config):
	out = config.output
	written = []
	for record in read_records(os.path.join(out, STREAMS["records"])):
		written.append(render_overlays(record, out))
	return written


def evaluate(config, predictions=None, ground_truth=None):
	e = config["evaluation"]
	predictions = predictions or config.resolve(e["predictions"])
	ground_truth = ground_truth or config.resolve(e["ground_truth"]) or os.path.join(config.output, STREAMS["records"])
	if not predictions:
		raise ValueError("evaluate needs a predictions file")
	embedder = interfaces.get_embedder(e["embedder"])
	report = evaluate_benchmark(read_predictions(predictions), read_ground_truth(ground_truth), embedder,
								float(e["heat_threshold"]), e["aggregation"])
	os.makedirs(config.output, exist_ok=True)
	write_report(report, os.path.join(config.output, "report.json"))
	return report
