from pyarti.curation import *
from pyarti import curation
from pyarti.injection import PixelImage
from pyarti.interfaces.vlm import (ClientException, MockVlmClient, RecordingClient, ReplayClient,
								   TransportException, encode_png, exchange_key)
import numpy as np
import os
import shutil
import tempfile
import unittest


def image(seed, h=32, w=32):
	return PixelImage(np.random.default_rng(seed).integers(0, 256, size=(h, w, 3), dtype=np.uint8))


class TestMetricGate(unittest.TestCase):
	def testDecisionTable(self):
		"""Checking the three decision intervals and their closed boundaries"""
		t = FilterThresholds(0.5, 0.9)
		table = [(0.0, False, "too_similar"), (0.05, False, "too_similar"), (0.1, True, "within_band"),
				 (0.3, True, "within_band"), (0.5, True, "within_band"), (0.5000001, False, "too_damaged"),
				 (0.6, False, "too_damaged"), (3.0, False, "too_damaged")]
		for d, keep, reason in table:
			decision = metric_gate(d, t)
			self.assertEqual((decision.keep, decision.reason), (keep, reason), "d="+repr(d))

	def testBadInputs(self):
		"""Checking negative distances and invalid thresholds"""
		self.assertRaises(CurationException, metric_gate, -0.1, FilterThresholds())
		self.assertRaises(CurationException, metric_gate, float("nan"), FilterThresholds())
		self.assertRaises(CurationException, FilterThresholds, 0.9, 0.5)
		self.assertRaises(CurationException, FilterThresholds, 0.5, 1.5)

	def testRmsDistance(self):
		"""Checking the per-patch RMS distance"""
		a = np.zeros((8, 8, 3), dtype=np.uint8)
		b = a.copy()
		self.assertEqual(rms_patch_distance(a, b, 4), 0.0)
		b[0:4, 0:4] = 255
		self.assertAlmostEqual(rms_patch_distance(a, b, 4), 0.25, places=12)
		self.assertRaises(CurationException, rms_patch_distance, a, b[:4], 4)
		self.assertRaises(CurationException, rms_patch_distance, a, b, 3)

	def testDistanceBackends(self):
		"""Checking the distance chosen by curation.distance.kind"""
		a, b = image(1, 16, 16), image(2, 16, 16)
		self.assertEqual(make_distance({"kind": "rms"}, 8)(a, b), rms_patch_distance(a, b, 8))
		scorer = make_distance({"kind": "http", "endpoint": "http://localhost:9/score", "model": "m"}, 8)
		self.assertTrue(callable(scorer))
		self.assertRaises(CurationException, make_distance, {"kind": "ssim"}, 8)

	@unittest.skipIf(curation.lpips is not None, "lpips installed")
	def testLpipsMissing(self):
		"""Checking that the lpips backend names its missing extra"""
		self.assertRaises(CurationException, make_distance, {"kind": "lpips"}, 8)

	@unittest.skipIf(curation.torch is None, "torch not installed")
	def testLpipsInputs(self):
		"""Checking the crop scaling and upsampling in front of the lpips network"""
		from unittest import mock
		torch = curation.torch
		seen = []

		class MeanGap(torch.nn.Module):
			def __init__(self, **kwargs):
				super().__init__()

			def forward(self, x, y):
				seen.append((tuple(x.shape), float(x.min()), float(x.max())))
				return (x - y).abs().mean().reshape(1, 1, 1, 1)

		with mock.patch.object(curation, "lpips", mock.Mock(LPIPS=MeanGap)):
			distance = make_distance({"kind": "lpips", "net": "alex"}, 8)
			black = np.zeros((16, 32, 3), dtype=np.uint8)
			white = np.full((16, 32, 3), 255, dtype=np.uint8)
			self.assertEqual(distance(black, black), 0.0)
			self.assertAlmostEqual(distance(black, white), 2.0, places=6)
			self.assertRaises(CurationException, distance, black, white[:8])
		self.assertEqual(seen[0], ((1, 3, 64, 128), -1.0, -1.0))
		self.assertEqual(seen[-1], ((1, 3, 64, 128), -1.0, -1.0))


class TestTriplet(unittest.TestCase):
	def testWholeImage(self):
		"""Checking a region covering the whole image"""
		o, a = image(1), image(2)
		t = build_triplet(o, a, [0, 0, 32, 32], "dog")
		self.assertTrue(np.all(t.masked_original.data == MASK_FILL))
		self.assertTrue(np.array_equal(t.cropped_original.data, o.data))
		self.assertTrue(np.array_equal(t.cropped_artifact.data, a.data))

	def testSubRegion(self):
		"""Checking crops and mask of a 16x16 region at (8, 8)"""
		o, a = image(3), image(4)
		t = build_triplet(o, a, [8, 8, 24, 24], "dog")
		self.assertEqual(t.cropped_original.data.shape, (16, 16, 3))
		self.assertTrue(np.array_equal(t.cropped_original.data, o.data[8:24, 8:24]))
		self.assertTrue(np.array_equal(t.cropped_artifact.data, a.data[8:24, 8:24]))
		outside = np.ones((32, 32), dtype=bool)
		outside[8:24, 8:24] = False
		self.assertTrue(np.array_equal(t.masked_original.data[outside], o.data[outside]))
		self.assertTrue(np.all(t.masked_original.data[8:24, 8:24] == 128))
		same = build_triplet(o, o, [8, 8, 24, 24], "dog")
		self.assertTrue(np.array_equal(same.cropped_original.data, same.cropped_artifact.data))

	def testOutOfBounds(self):
		"""Checking that regions must lie inside the image"""
		self.assertRaises(CurationException, build_triplet, image(1), image(2), [8, 8, 40, 24], "dog")
		self.assertRaises(CurationException, build_triplet, image(1), image(2), [8, 8, 8, 24], "dog")
		self.assertRaises(CurationException, build_triplet, image(1), image(2, 16, 16), [0, 0, 8, 8], "dog")


class TestPrompts(unittest.TestCase):
	def testTemplatesVersioned(self):
		"""Checking that every prompt template carries a version header"""
		for kind in PROMPT_KINDS:
			body, version = load_template(kind)
			self.assertEqual(version, "v1")
			self.assertTrue(body)
		self.assertRaises(CurationException, load_template, "summary")

	def testFilterPrompt(self):
		"""Checking placeholder substitution in the filter prompt"""
		prompt = render_prompt("filter", "duplication", "dog", (8, 8, 24, 24))
		self.assertIn("Artifact type: duplication", prompt)
		self.assertIn("[8, 8, 24, 24]", prompt)
		self.assertIn("part of the dog", prompt)
		self.assertTrue(prompt.rstrip().endswith("Answer Yes or No."))
		self.assertNotIn("{", prompt)

	def testGlobalPrompt(self):
		"""Checking the region list of the global prompt"""
		prompt = render_prompt("global", bbox_list=[((0, 0, 16, 16), "An extra leg."), ((16, 0, 32, 16), "A fused ear.")])
		self.assertIn("- [0, 0, 16, 16]: An extra leg.\n- [16, 0, 32, 16]: A fused ear.", prompt)

	def testYesNo(self):
		"""Checking strict yes/no parsing"""
		for reply, verdict in (("Yes", True), (" yes. ", True), ("**No**", False), ("NO!", False),
							   ("Yes, clearly an extra leg", None), ("", None), (None, None)):
			self.assertEqual(parse_yes_no(reply), verdict, repr(reply))


class TestJudge(unittest.TestCase):
	def setUp(self):
		self.triplet = build_triplet(image(5), image(6), [8, 8, 24, 24], "cat")
		self.sleeps = []

	def testFilterVerdicts(self):
		"""Checking keep, reject and unparseable judge replies"""
		self.assertTrue(vlm_filter(self.triplet, "omission", MockVlmClient(["Yes"])).keep)
		no = vlm_filter(self.triplet, "omission", MockVlmClient(["No"]))
		self.assertEqual((no.keep, no.reason, no.flagged), (False, "judge_no", False))
		odd = vlm_filter(self.triplet, "omission", MockVlmClient(["The cat looks fine to me"]))
		self.assertEqual((odd.keep, odd.reason, odd.flagged), (False, "unparseable_reply", True))
		self.assertRaises(CurationException, vlm_filter, self.triplet, "distortion", MockVlmClient(["Yes"]))

	def testFilterSendsTriplet(self):
		"""Checking that the judge sees three images and the filter prompt"""
		client = MockVlmClient()
		vlm_filter(self.triplet, "fusion", client)
		prompt, n_images = client.calls[0]
		self.assertEqual(n_images, 3)
		self.assertIn("Artifact type: fusion", prompt)

	def testRetries(self):
		"""Checking bounded retries with exponential backoff"""
		client = MockVlmClient(["Yes"], failures=2)
		reply = call_with_retries(client, "p", [], retries=3, backoff=0.5, sleep=self.sleeps.append)
		self.assertEqual(reply, "Yes")
		self.assertEqual(self.sleeps, [0.5, 1.0])
		failing = MockVlmClient(failures=5)
		self.assertRaises(TransportException, call_with_retries, failing, "p", [], 3, 0.5, self.sleeps.append)
		self.assertEqual(len(failing.calls), 3)

	def testLocalExplanation(self):
		"""Checking local explanation success, empty reply and timeout"""
		text = local_explanation(self.triplet, "duplication", MockVlmClient(["An extra ear grows from the head."]))
		self.assertEqual(text, "An extra ear grows from the head.")
		self.assertRaises(CurationException, local_explanation, self.triplet, "duplication", MockVlmClient(["  "]))
		self.assertRaises(TransportException, local_explanation, self.triplet, "duplication",
						  MockVlmClient(failures=3), 3, 0.0)

	def testGlobalExplanation(self):
		"""Checking global explanation success, empty reply, timeout and missing locals"""
		locals_ = (((8, 8, 24, 24), "An extra ear."),)
		art = image(7)
		self.assertEqual(global_explanation(art, locals_, MockVlmClient(["The cat has three ears."])),
						 "The cat has three ears.")
		self.assertRaises(CurationException, global_explanation, art, locals_, MockVlmClient([""]))
		self.assertRaises(TransportException, global_explanation, art, locals_, MockVlmClient(failures=3), 3, 0.0)
		self.assertRaises(CurationException, global_explanation, art, (), MockVlmClient())
		client = MockVlmClient()
		global_explanation(art, locals_, client)
		self.assertEqual(client.calls[0][1], 1)
		self.assertIn("[8, 8, 24, 24]: An extra ear.", client.calls[0][0])


class TestCurate(unittest.TestCase):
	def distance(self, value):
		return lambda a, b: value

	def testMetricRoute(self):
		"""Checking that distortions go through the metric gate"""
		o, a = image(8), image(9)
		kept = curate(o, a, [0, 0, 16, 16], "dog", "distortion", MockVlmClient(), FilterThresholds(),
					  self.distance(0.3), caption="A dog.")
		self.assertEqual((kept.keep, kept.route, kept.distance), (True, "metric", 0.3))
		self.assertEqual(kept.explanations.local[0][0], (0, 0, 16, 16))
		self.assertTrue(kept.explanations.global_text)
		self.assertEqual(kept.explanations.caption, "A dog.")
		dropped = curate(o, a, [0, 0, 16, 16], "dog", "distortion", MockVlmClient(), FilterThresholds(),
						 self.distance(0.05))
		self.assertEqual((dropped.keep, dropped.reason), (False, "too_similar"))
		self.assertEqual(dropped.explanations.local, ())

	def testJudgeRoute(self):
		"""Checking that other artifact types go through the judge"""
		o, a = image(10), image(11)
		client = MockVlmClient(["No"])
		result = curate(o, a, [0, 0, 16, 16], "dog", "duplication", client, FilterThresholds(), None)
		self.assertEqual((result.keep, result.route, result.reason), (False, "vlm", "judge_no"))
		self.assertEqual(len(client.calls), 1)
		back = CurationResult.from_dict(result.to_dict())
		self.assertEqual(back, result)


class TestTranscripts(unittest.TestCase):
	def setUp(self):
		self.root = tempfile.mkdtemp()
		self.path = os.path.join(self.root, "transcript.jsonl")

	def tearDown(self):
		shutil.rmtree(self.root)

	def testRecordReplay(self):
		"""Checking that a recorded transcript reproduces every decision"""
		triplet = build_triplet(image(12), image(13), [0, 0, 16, 16], "dog")
		recorder = RecordingClient(MockVlmClient(["No", "Yes"]), self.path)
		first = [vlm_filter(triplet, "omission", recorder).keep,
				 vlm_filter(build_triplet(image(12), image(14), [0, 0, 16, 16], "dog"), "omission", recorder).keep]
		replay = ReplayClient(self.path)
		again = [vlm_filter(triplet, "omission", replay).keep,
				 vlm_filter(build_triplet(image(12), image(14), [0, 0, 16, 16], "dog"), "omission", replay).keep]
		self.assertEqual(first, [False, True])
		self.assertEqual(again, first)
		self.assertRaises(ClientException, vlm_filter, build_triplet(image(12), image(15), [0, 0, 16, 16], "dog"),
						  "omission", replay)

	def testExchangeKey(self):
		"""Checking that the exchange key depends on prompt and pixels"""
		a, b = image(1), image(2)
		self.assertEqual(exchange_key("p", [a]), exchange_key("p", [PixelImage(a.data.copy())]))
		self.assertNotEqual(exchange_key("p", [a]), exchange_key("q", [a]))
		self.assertNotEqual(exchange_key("p", [a]), exchange_key("p", [b]))

	def testEncodePng(self):
		"""Checking that encoded images decode to the same RGB pixels"""
		import base64
		import io
		from PIL import Image
		a = image(3, 8, 16)
		for source in (a, a.data):
			with Image.open(io.BytesIO(base64.b64decode(encode_png(source)))) as decoded:
				self.assertEqual(decoded.mode, "RGB")
				self.assertTrue(np.array_equal(np.asarray(decoded), a.data))


if __name__ == '__main__':
	unittest.main()
