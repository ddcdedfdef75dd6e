#!/usr/bin/env python
"""Clients for the remote judge model, sentence embedder and perceptual scorer.

Every client speaks the same small HTTP contract: a JSON request
{model, prompt, images: [base64 PNG]} and a JSON reply carrying text,
vector or distance.  The mock, recording and replay clients stand in for
the remote service in tests and dry runs.
"""

__author__ = "pyarti developers"
__date__ = "18 October 2026"

import base64
import hashlib
import io
import json
import logging
import os
import threading

import numpy as np
import requests
from PIL import Image


class TransportException(Exception):
	"""Represents a retryable failure talking to a remote service."""
	def __init__(self, value):
		self.param = value
	def __str__(self):
		return repr(self.param)


class ClientException(Exception):
	"""Represents a non-retryable client failure (bad reply, missing key, replay miss)."""
	def __init__(self, value):
		self.param = value
	def __str__(self):
		return repr(self.param)


def encode_png(image):
	"""Base64 PNG of a PixelImage or HxWx3 uint8 array."""
	data = getattr(image, "data", image)
	buf = io.BytesIO()
	Image.fromarray(np.asarray(data, dtype=np.uint8)).save(buf, format="PNG")
	return base64.b64encode(buf.getvalue()).decode("ascii")


def exchange_key(prompt, images):
	"""Stable key of one exchange: prompt text plus raw image digests."""
	h = hashlib.sha256(prompt.encode("utf-8"))
	for image in images:
		data = np.ascontiguousarray(getattr(image, "data", image))
		h.update(repr(data.shape).encode("ascii"))
		h.update(hashlib.sha256(data.tobytes()).digest())
	return h.hexdigest()


class _HttpService:
	def __init__(self, endpoint, model, api_key_env="PYARTI_API_KEY", timeout=60.0, session=None):
		if not endpoint:
			raise ClientException("HTTP client needs an endpoint")
		self._endpoint = endpoint
		self._model = model
		self._api_key_env = api_key_env
		self._timeout = timeout
		self._session = session or requests.Session()

	def _headers(self):
		headers = {"Content-Type": "application/json"}
		key = os.environ.get(self._api_key_env) if self._api_key_env else None
		if key:
			headers["Authorization"] = "Bearer "+key
		return headers

	def _post(self, payload, field):
		payload = dict(payload, model=self._model)
		try:
			resp = self._session.post(self._endpoint, json=payload, headers=self._headers(), timeout=self._timeout)
		except requests.RequestException as e:
			raise TransportException("Request to "+self._endpoint+" failed: "+str(e))
		if resp.status_code == 429 or resp.status_code >= 500:
			raise TransportException("Service at "+self._endpoint+" returned "+str(resp.status_code))
		if resp.status_code != 200:
			raise ClientException("Service at "+self._endpoint+" returned "+str(resp.status_code)+": "+resp.text[:200])
		try:
			body = resp.json()
		except ValueError:
			raise ClientException("Service at "+self._endpoint+" did not return JSON")
		if not isinstance(body, dict) or field not in body:
			raise ClientException("Reply from "+self._endpoint+" has no "+repr(field)+" field")
		return body[field]


class HttpVlmClient(_HttpService):
	def complete(self, prompt, images):
		text = self._post({"prompt": prompt, "images": [encode_png(im) for im in images]}, "text")
		return "" if text is None else str(text)


class HttpEmbedder(_HttpService):
	def embed(self, text):
		vector = self._post({"prompt": text, "images": []}, "vector")
		return np.asarray(vector, dtype=np.float64)


class HttpDistanceScorer(_HttpService):
	"""External perceptual distance over the same wire contract."""
	def distance(self, a, b):
		return float(self._post({"prompt": "", "images": [encode_png(a), encode_png(b)]}, "distance"))

	def __call__(self, a, b):
		return self.distance(a, b)


DEFAULT_MOCK_RULES = (
	("Answer Yes or No.", "Yes"),
	("In one or two sentences", "The part looks structurally implausible next to the original."),
	("In a short paragraph", "The image shows structural artifacts in the marked regions."),
)


class MockVlmClient:
	"""Scripted judge: a reply queue first, then the first matching prompt rule.

	failures makes the first n calls raise TransportException.
	"""
	def __init__(self, replies=None, rules=DEFAULT_MOCK_RULES, failures=0, default=""):
		self._replies = list(replies or [])
		self._rules = tuple(rules)
		self._failures = failures
		self._default = default
		self._lock = threading.Lock()
		self.calls = []

	def complete(self, prompt, images):
		with self._lock:
			self.calls.append((prompt, len(images)))
			if self._failures > 0:
				self._failures -= 1
				raise TransportException("mock transport failure")
			if self._replies:
				return self._replies.pop(0)
		for needle, reply in self._rules:
			if needle in prompt:
				return reply
		return self._default


class MockEmbedder:
	"""Deterministic embeddings: fixed vectors by text, else hashed bag of words."""
	def __init__(self, vectors=None, dim=64):
		self._vectors = {k: np.asarray(v, dtype=np.float64) for k, v in (vectors or {}).items()}
		self._dim = dim

	def embed(self, text):
		if text in self._vectors:
			return self._vectors[text]
		vec = np.zeros(self._dim)
		for token in text.lower().split():
			digest = hashlib.sha256(token.encode("utf-8")).digest()
			vec[int.from_bytes(digest[:4], "big") % self._dim] += 1.0
		return vec


class RecordingClient:
	"""Wraps a client and appends every exchange to a JSONL transcript."""
	def __init__(self, inner, path):
		self._inner = inner
		self._path = path
		self._lock = threading.Lock()

	def complete(self, prompt, images):
		reply = self._inner.complete(prompt, images)
		line = json.dumps({"key": exchange_key(prompt, images), "prompt": prompt, "reply": reply}, sort_keys=True)
		with self._lock:
			with open(self._path, "a", encoding="utf-8") as f:
				f.write(line+"\n")
		return reply


class ReplayClient:
	"""Answers from a recorded transcript keyed by prompt and image digests."""
	def __init__(self, path):
		self._replies = {}
		with open(path, "r", encoding="utf-8") as f:
			for line in f:
				if line.strip():
					entry = json.loads(line)
					self._replies[entry["key"]] = entry["reply"]
		logging.info("Loaded "+str(len(self._replies))+" recorded exchanges from "+str(path))

	def complete(self, prompt, images):
		key = exchange_key(prompt, images)
		if key not in self._replies:
			raise ClientException("No recorded reply for exchange "+key[:12])
		return self._replies[key]
