#!/usr/bin/env python
"""Pipeline configuration: one YAML document merged over built-in defaults.
"""

__author__ = "pyarti developers"
__date__ = "18 October 2026"

import copy
import os

import yaml

from .curation import CurationException, FilterThresholds
from .grid import TOOLS
from .injection import InjectionException, InjectionSchedule
from .toolbox import AddParams, DistortParams, FuseParams, RemoveParams, ToolException, ToolParams

DEFAULTS = {
	"manifest": None,
	"output": "pyarti_out",
	"seed": 0,
	"workers": 1,
	"injections_per_image": 1,
	"tools": list(TOOLS),
	"grid": {"patch_px": 16},
	"perception": {"patch_fg_threshold": 0.5, "containment_threshold": 0.5, "vocabulary": None},
	"toolbox": {
		"add": {"alpha": 4, "lambda_dist": 0.1},
		"remove": {"radius": 2},
		"distort": {"kernel": "shuffle", "sigma": 1.5, "strips": 3, "max_attempts": 16},
		"fuse": {"band_radius": 1, "max_offset": 3, "seeds": 4, "reversed_fraction": 0.5},
	},
	"injection": {
		"blend": 0,
		"schedule": {
			"total_steps": 25,
			"pe_disabled_final_steps": {"duplication": 5, "omission": 1, "distortion": 5, "fusion": 5},
			"value_steps": 15,
			"value_blocks": [20, 38],
		},
		"verify": {"enabled": True, "dim": 16, "rope_base": 10000.0},
	},
	"curation": {
		"tau1": 0.5,
		"tau2": 0.9,
		"retries": 3,
		"backoff": 0.5,
		"template_dir": None,
		"client": {"kind": "mock", "endpoint": None, "model": None, "api_key_env": "PYARTI_API_KEY",
				   "timeout": 60.0, "transcript": None, "record": None},
		"distance": {"kind": "rms", "endpoint": None, "model": None, "api_key_env": "PYARTI_API_KEY",
					 "net": "alex", "device": "cpu"},
	},
	"evaluation": {
		"heat_threshold": 0.5,
		"aggregation": "per_image",
		"predictions": None,
		"ground_truth": None,
		"embedder": {"kind": "mock", "endpoint": None, "model": None, "api_key_env": "PYARTI_API_KEY"},
	},
}


class ConfigException(Exception):
	"""Represents an invalid pipeline configuration."""
	def __init__(self, value):
		self.param = value
	def __str__(self):
		return repr(self.param)


def merge(base, override):
	"""Recursive dict merge; override wins, unknown keys are errors."""
	out = copy.deepcopy(base)
	for key, value in (override or {}).items():
		if key not in out:
			raise ConfigException("Unknown configuration key "+repr(key))
		if isinstance(out[key], dict) and isinstance(value, dict):
			sub = merge(out[key], value) if key != "pe_disabled_final_steps" else dict(out[key], **value)
			out[key] = sub
		else:
			out[key] = value
	return out


def set_path(data, dotted, value):
	"""Apply one dotted-key override, e.g. curation.client.kind=http."""
	keys = dotted.split(".")
	node = data
	for key in keys[:-1]:
		if not isinstance(node.get(key), dict):
			raise ConfigException("Unknown configuration key "+repr(dotted))
		node = node[key]
	if keys[-1] not in node:
		raise ConfigException("Unknown configuration key "+repr(dotted))
	node[keys[-1]] = value


class PipelineConfig:
	"""Validated configuration with the typed parameter objects each module takes."""

	def __init__(self, data, base_dir=""):
		self.data = merge(DEFAULTS, data)
		self.base_dir = base_dir

	@classmethod
	def from_file(cls, path, overrides=None):
		with open(path, "r", encoding="utf-8") as f:
			data = yaml.safe_load(f) or {}
		if not isinstance(data, dict):
			raise ConfigException("Configuration "+str(path)+" must be a mapping")
		config = cls(data, os.path.dirname(os.path.abspath(path)))
		for key, value in (overrides or {}).items():
			config.set(key, value)
		return config

	def set(self, dotted, value):
		set_path(self.data, dotted, value)

	def __getitem__(self, key):
		return self.data[key]

	def resolve(self, path):
		if path is None:
			return None
		return path if os.path.isabs(path) else os.path.join(self.base_dir, path)

	@property
	def manifest(self):
		return self.resolve(self.data["manifest"])

	@property
	def output(self):
		return self.resolve(self.data["output"])

	@property
	def seed(self):
		return int(self.data["seed"])

	@property
	def workers(self):
		return int(self.data["workers"])

	@property
	def patch_px(self):
		return int(self.data["grid"]["patch_px"])

	def tool_params(self):
		t = self.data["toolbox"]
		return ToolParams(AddParams(**t["add"]), RemoveParams(**t["remove"]),
						  DistortParams(**t["distort"]), FuseParams(**t["fuse"]))

	def schedule(self):
		s = self.data["injection"]["schedule"]
		return InjectionSchedule(int(s["total_steps"]), tuple(sorted(s["pe_disabled_final_steps"].items())),
								 int(s["value_steps"]), tuple(int(v) for v in s["value_blocks"]))

	def thresholds(self):
		c = self.data["curation"]
		return FilterThresholds(float(c["tau1"]), float(c["tau2"]))

	def validate(self, need_manifest=True):
		"""Check every section and resolve referenced paths; returns self."""
		d = self.data
		try:
			self.tool_params()
			self.schedule()
			self.thresholds()
		except (ToolException, InjectionException, CurationException, TypeError, ValueError) as e:
			raise ConfigException("Invalid parameters: "+str(e))
		if self.patch_px < 1 or self.workers < 1:
			raise ConfigException("grid.patch_px and workers must be positive")
		if int(d["injections_per_image"]) < 0:
			raise ConfigException("injections_per_image must be >= 0")
		unknown = [t for t in d["tools"] if t not in TOOLS]
		if unknown or not d["tools"]:
			raise ConfigException("tools must be a non-empty subset of "+repr(TOOLS))
		p = d["perception"]
		for key in ("patch_fg_threshold", "containment_threshold"):
			if not 0.0 < float(p[key]) <= 1.0:
				raise ConfigException("perception."+key+" must lie in (0, 1]")
		if int(d["injection"]["blend"]) < 0 or int(d["injection"]["blend"]) > self.patch_px // 2:
			raise ConfigException("injection.blend must lie in [0, patch_px/2]")
		if int(d["injection"]["verify"]["dim"]) % 2:
			raise ConfigException("injection.verify.dim must be even")
		if d["curation"]["client"]["kind"] not in ("mock", "http", "replay"):
			raise ConfigException("curation.client.kind must be mock, http or replay")
		if d["curation"]["distance"]["kind"] not in ("rms", "http", "lpips"):
			raise ConfigException("curation.distance.kind must be rms, http or lpips")
		if d["evaluation"]["aggregation"] not in ("per_image", "micro"):
			raise ConfigException("evaluation.aggregation must be per_image or micro")
		if int(d["curation"]["retries"]) < 1:
			raise ConfigException("curation.retries must be >= 1")
		if need_manifest:
			if not self.manifest or not os.path.exists(self.manifest):
				raise ConfigException("Input manifest "+repr(self.manifest)+" not found")
		vocabulary = self.resolve(p["vocabulary"])
		if vocabulary and not os.path.exists(vocabulary):
			raise ConfigException("perception.vocabulary "+repr(vocabulary)+" not found")
		transcript = self.resolve(d["curation"]["client"]["transcript"])
		if d["curation"]["client"]["kind"] == "replay" and not (transcript and os.path.exists(transcript)):
			raise ConfigException("Replay client needs an existing curation.client.transcript")
		template_dir = self.resolve(d["curation"]["template_dir"])
		if template_dir and not os.path.isdir(template_dir):
			raise ConfigException("curation.template_dir "+repr(template_dir)+" not found")
		return self


def read_input_manifest(path):
	"""Scene manifest paths listed by the input manifest, in order."""
	with open(path, "r", encoding="utf-8") as f:
		data = yaml.safe_load(f)
	if data is None:
		return []
	scenes = data.get("scenes", []) if isinstance(data, dict) else data
	if not isinstance(scenes, list):
		raise ConfigException("Input manifest "+str(path)+" must list scene manifests")
	base = os.path.dirname(os.path.abspath(path))
	return [s if os.path.isabs(s) else os.path.join(base, s) for s in (scenes or [])]
