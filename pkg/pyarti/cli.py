#!/usr/bin/env python
"""Command line entry point: pyarti <command> [options].

Commands: perceive, synthesize, inject, curate, emit, run, overlay, evaluate.
"""

__author__ = "pyarti developers"
__date__ = "18 October 2026"

import logging
import sys
from optparse import OptionParser

import yaml

from . import stages
from .config import ConfigException, PipelineConfig, read_input_manifest
from .dataset import DatasetException
from .evaluation import EvaluationException, summary_lines
from .master import LOG_FORMAT
from .toolbox import ToolException

COMMANDS = ("perceive", "synthesize", "inject", "curate", "emit", "run", "overlay", "evaluate")
LOG_LEVELS = {"debug": logging.DEBUG, "info": logging.INFO, "warning": logging.WARNING,
			  "error": logging.ERROR, "critical": logging.CRITICAL}

# option dest -> dotted config key
OVERRIDES = {
	"manifest": "manifest", "output": "output", "seed": "seed", "workers": "workers",
	"injections": "injections_per_image", "patch_px": "grid.patch_px", "client": "curation.client.kind",
	"endpoint": "curation.client.endpoint", "model": "curation.client.model",
	"transcript": "curation.client.transcript", "record": "curation.client.record",
	"tau1": "curation.tau1", "tau2": "curation.tau2", "blend": "injection.blend",
	"predictions": "evaluation.predictions", "ground_truth": "evaluation.ground_truth",
	"aggregation": "evaluation.aggregation",
}


def parse_options(parser=None, args=None):
	"""Parses the pyarti command and its options.
	Returns command, options, remaining args."""
	if not parser:
		parser = OptionParser(usage="usage: %prog COMMAND [options]\n\ncommands: "+", ".join(COMMANDS))
	if args is None:
		args = sys.argv[1:]

	parser.add_option("-c", "--config", dest="config", default=None,
			help="pipeline configuration file (YAML)", metavar="FILE")
	parser.add_option("-m", "--manifest", dest="manifest", default=None,
			help="input manifest listing scene manifests", metavar="FILE")
	parser.add_option("-o", "--output", dest="output", default=None,
			help="output directory", metavar="DIR")
	parser.add_option("-s", "--seed", dest="seed", type="int", default=None,
			help="global seed", metavar="N")
	parser.add_option("-n", "--num_workers", "--workers", dest="workers", type="int", default=None,
			help="number of images processed in parallel", metavar="N")
	parser.add_option("--injections-per-image", dest="injections", type="int", default=None,
			help="injections planned per image, 0 for every candidate", metavar="N")
	parser.add_option("--tools", dest="tools", default=None,
			help="comma separated tools (add,remove,distort,fuse)", metavar="LIST")
	parser.add_option("--patch-px", dest="patch_px", type="int", default=None,
			help="patch side in pixels", metavar="N")
	parser.add_option("--blend", dest="blend", type="int", default=None,
			help="edge feather of the pixel oracle in pixels", metavar="N")
	parser.add_option("--tau1", dest="tau1", type="float", default=None,
			help="lower similarity bound of the metric gate", metavar="X")
	parser.add_option("--tau2", dest="tau2", type="float", default=None,
			help="upper similarity bound of the metric gate", metavar="X")
	parser.add_option("--client", dest="client", default=None,
			help="judge client (mock/http/replay)", metavar="KIND")
	parser.add_option("--endpoint", dest="endpoint", default=None,
			help="judge endpoint URL (http client)", metavar="URL")
	parser.add_option("--model", dest="model", default=None,
			help="judge model id (http client)", metavar="NAME")
	parser.add_option("--transcript", dest="transcript", default=None,
			help="transcript to answer from (replay client)", metavar="FILE")
	parser.add_option("--record", dest="record", default=None,
			help="append every judge exchange to this transcript", metavar="FILE")
	parser.add_option("--predictions", dest="predictions", default=None,
			help="model predictions to evaluate (JSONL)", metavar="FILE")
	parser.add_option("--ground-truth", dest="ground_truth", default=None,
			help="records file or benchmark manifest (JSONL)", metavar="FILE")
	parser.add_option("--aggregation", dest="aggregation", default=None,
			help="localization aggregation (per_image/micro)", metavar="MODE")
	parser.add_option("--set", dest="set", action="append", default=[],
			help="override any configuration key, e.g. toolbox.add.alpha=3", metavar="KEY=VALUE")
	parser.add_option("-l", "--log-level", dest="log_level", default="warning",
			help="log level (debug/info/warning/error/critical)", metavar="LEVEL")

	options, rest = parser.parse_args(args)
	if not rest or rest[0] not in COMMANDS:
		parser.error("expected a command: "+", ".join(COMMANDS))
	return rest[0], options, rest[1:]


def get_config(options):
	"""Configuration from --config plus flag overrides."""
	overrides = {}
	for dest, key in OVERRIDES.items():
		value = getattr(options, dest)
		if value is not None:
			overrides[key] = value
	if options.tools:
		overrides["tools"] = [t.strip() for t in options.tools.split(",") if t.strip()]
	for item in options.set:
		key, sep, value = item.partition("=")
		if not sep:
			raise ConfigException("--set expects KEY=VALUE, got "+repr(item))
		overrides[key.strip()] = yaml.safe_load(value)
	if options.config:
		return PipelineConfig.from_file(options.config, overrides)
	config = PipelineConfig({})
	for key, value in overrides.items():
		config.set(key, value)
	return config


def main(argv=None):
	command, options, _ = parse_options(args=argv)
	if options.log_level.lower() not in LOG_LEVELS:
		sys.stderr.write("Unknown log level "+repr(options.log_level)+"\n")
		return 2
	loglevel = LOG_LEVELS[options.log_level.lower()]
	logging.basicConfig(level=loglevel, format=LOG_FORMAT)
	try:
		config = get_config(options).validate(need_manifest=command not in ("overlay", "evaluate"))
	except (ConfigException, OSError, yaml.YAMLError) as e:
		sys.stderr.write("Invalid configuration: "+str(e)+"\n")
		return 2

	if command == "run":
		summary = stages.run_pipeline(config, loglevel)
		sys.stdout.write(" ".join(k+"="+str(summary[k]) for k in stages.COUNTS)+"\n")
		return 0 if summary["images_ok"] > 0 else 1
	if command == "emit":
		summary = stages.run_stage(config, "emit", loglevel)
		sys.stdout.write(" ".join(k+"="+str(summary[k]) for k in stages.COUNTS)+"\n")
		return 0 if summary["images_ok"] > 0 else 1
	if command == "overlay":
		try:
			written = stages.overlay_all(config)
		except (DatasetException, ToolException, OSError) as e:
			sys.stderr.write(str(e)+"\n")
			return 1
		sys.stdout.write("wrote "+str(len(written))+" overlays\n")
		return 0
	if command == "evaluate":
		try:
			report = stages.evaluate(config)
		except (EvaluationException, ValueError, OSError) as e:
			sys.stderr.write(str(e)+"\n")
			return 1
		sys.stdout.write("\n".join(summary_lines(report))+"\n")
		return 0
	n_images = len(read_input_manifest(config.manifest))
	failures = stages.run_stage(config, command, loglevel)
	sys.stdout.write(command+": "+str(n_images - failures)+"/"+str(n_images)+" images\n")
	return 0 if n_images - failures > 0 else 1


if __name__ == "__main__":
	sys.exit(main())
