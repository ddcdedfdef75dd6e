__all__ = ["generic", "vlm"]

from .generic import *
from .vlm import *

from . import generic, vlm


def get_interface(workers, kind="generic"):
	"""Returns the worker interface for the pipeline's per-image work units."""
	if kind != "generic":
		raise ValueError("Interface "+repr(kind)+" unknown.")
	return generic.GenericInterface(num_workers=int(workers))


def get_client(cfg, transcript=None):
	"""Judge-model client for the client section of the pipeline config.

	kind is mock, http or replay; with record set, every exchange is also
	appended to transcript.
	"""
	kind = cfg.get("kind", "mock")
	if kind == "mock":
		client = vlm.MockVlmClient()
	elif kind == "http":
		client = vlm.HttpVlmClient(cfg.get("endpoint"), cfg.get("model"), cfg.get("api_key_env", "PYARTI_API_KEY"),
								   float(cfg.get("timeout", 60.0)))
	elif kind == "replay":
		client = vlm.ReplayClient(cfg.get("transcript"))
	else:
		raise vlm.ClientException("Client kind "+repr(kind)+" unknown.")
	if cfg.get("record") and transcript:
		client = vlm.RecordingClient(client, transcript)
	return client


def get_embedder(cfg):
	kind = cfg.get("kind", "mock")
	if kind == "mock":
		return vlm.MockEmbedder()
	if kind == "http":
		return vlm.HttpEmbedder(cfg.get("endpoint"), cfg.get("model"), cfg.get("api_key_env", "PYARTI_API_KEY"),
								float(cfg.get("timeout", 60.0)))
	raise vlm.ClientException("Embedder kind "+repr(kind)+" unknown.")
