from pyarti.grid import PatchCoord, PatchGrid, TOOLS, l1
from pyarti.toolbox import *
from pyarti.perception import scene_from_dict
from fractions import Fraction
import itertools
import json
import math
import numpy as np
import os
import shutil
import tempfile
import unittest

G5 = PatchGrid(5, 5, 16)


def P(*cells):
	return frozenset(PatchCoord(*c) for c in cells)


def random_blob(rng, g, n):
	"""n distinct cells grown from a random start by 4-neighbour steps."""
	n = max(1, min(n, g.n_patches))
	cells = {(int(rng.integers(g.h_p)), int(rng.integers(g.w_p)))}
	steps = ((0, 1), (1, 0), (0, -1), (-1, 0))
	while len(cells) < n:
		i, j = sorted(cells)[int(rng.integers(len(cells)))]
		di, dj = steps[int(rng.integers(4))]
		if g.contains((i + di, j + dj)):
			cells.add((i + di, j + dj))
	return frozenset(PatchCoord(*c) for c in cells)


def random_grid(rng, low=3, high=12):
	return PatchGrid(int(rng.integers(low, high + 1)), int(rng.integers(low, high + 1)), 8)


def random_subset(rng, cells):
	cells = sorted(cells)
	k = int(rng.integers(1, len(cells) + 1))
	return frozenset(cells[i] for i in rng.choice(len(cells), size=k, replace=False))


def oracle_add_pairs(refs, ent, sub, alpha, lam, g):
	"""Exhaustive ring scan straight from the score formula."""
	n = len(refs)
	ci = math.floor(Fraction(sum(r[0] for r in refs), n) + Fraction(1, 2))
	cj = math.floor(Fraction(sum(r[1] for r in refs), n) + Fraction(1, 2))
	others = ent - refs
	best, best_score = None, None
	for i in range(g.h_p):
		for j in range(g.w_p):
			d = abs(i - ci) + abs(j - cj)
			if not 1 <= d <= alpha:
				continue
			di, dj = i - ci, j - cj
			shifted = frozenset((r[0] + di, r[1] + dj) for r in refs)
			score = (3.0 - len(shifted & refs) / n - len(shifted & others) / n - len(shifted & sub) / n) \
				* (1.0 / (1.0 + lam * (abs(di) + abs(dj))))
			if best is None or score > best_score:
				best, best_score = (di, dj), score
	di, dj = best
	return [((r[0] + di, r[1] + dj), r) for r in sorted(refs) if g.contains((r[0] + di, r[1] + dj))]


def oracle_remove_pool(targets, ent, sub, radius, g):
	nbr = frozenset(PatchCoord(i, j) for i in range(g.h_p) for j in range(g.w_p)
					if (i, j) not in targets and min(l1((i, j), t) for t in targets) <= radius)
	no_sub = nbr - sub
	non_ent = no_sub - ent
	return non_ent if len(non_ent) > len(no_sub) / 2 else no_sub


def oracle_best_offset(region, opp, max_offset, g, band):
	best, best_key = None, None
	for di in range(-max_offset, max_offset + 1):
		for dj in range(-max_offset, max_offset + 1):
			if not 1 <= abs(di) + abs(dj) <= max_offset:
				continue
			count = sum(1 for p in region if g.contains((p[0] + di, p[1] + dj))
						and (p[0] + di, p[1] + dj) in opp and (p[0] + di, p[1] + dj) not in band)
			key = (-count, abs(di) + abs(dj), di, dj)
			if count > 0 and (best_key is None or key < best_key):
				best, best_key = (di, dj), key
	return best


def oracle_fps(pts, k):
	"""Greedy max-min selection over plain tuples, one full scan per pick."""
	n = len(pts)
	ci, cj = Fraction(sum(p[0] for p in pts), n), Fraction(sum(p[1] for p in pts), n)
	picks = [min(pts, key=lambda p: (abs(p[0] - ci) + abs(p[1] - cj), tuple(p)))]
	while len(picks) < min(k, n):
		gap = {tuple(p): min(l1(p, s) for s in picks) for p in pts}
		far = max(gap.values())
		picks.append(min(p for p in gap if gap[p] == far))
	return [tuple(p) for p in picks]


def covering_radius(pts, seeds):
	return max(min(l1(p, s) for s in seeds) for p in pts)


class TestHelpers(unittest.TestCase):
	def testCentroid(self):
		"""Checking centroids with half-away-from-zero rounding"""
		self.assertEqual(centroid(P((1, 1), (1, 3), (3, 1), (3, 3))), (2, 2))
		self.assertEqual(centroid(P((0, 0))), (0, 0))
		self.assertEqual(centroid(P((0, 0), (0, 1))), (0, 1))
		self.assertEqual(round_half_away(-2.5), -3)
		self.assertRaises(ToolException, centroid, frozenset())

	def testPerimeterBand(self):
		"""Checking the L1 ring around a center"""
		self.assertEqual(perimeter_band(None, (2, 2), 1, G5), P((1, 2), (3, 2), (2, 1), (2, 3)))
		self.assertEqual(perimeter_band(None, (0, 0), 1, G5), P((1, 0), (0, 1)))
		self.assertEqual(len(perimeter_band(None, (2, 2), 2, G5)), 12)

	def testLocalNeighborhood(self):
		"""Checking the neighbourhood of a target set"""
		self.assertEqual(local_neighborhood(P((2, 2)), 1, G5), P((1, 2), (3, 2), (2, 1), (2, 3)))
		self.assertEqual(local_neighborhood(P((0, 0)), 1, G5), P((1, 0), (0, 1)))
		self.assertEqual(len(local_neighborhood(P((2, 2), (2, 3)), 1, G5)), 6)

	def testParams(self):
		"""Checking parameter invariants"""
		self.assertRaises(ToolException, AddParams, alpha=0)
		self.assertRaises(ToolException, RemoveParams, radius=0)
		self.assertRaises(ToolException, DistortParams, kernel="melt")
		self.assertRaises(ToolException, DistortParams, sigma=-1.0)
		self.assertRaises(ToolException, FuseParams, reversed_fraction=1.5)
		self.assertEqual(ToolParams().snapshot("fuse"),
						 {"band_radius": 1, "max_offset": 3, "seeds": 4, "reversed_fraction": 0.5})

	def testRngStreams(self):
		"""Checking that per-unit generators repeat and differ by index"""
		a = make_rng(7, "img", 3).random(4)
		self.assertTrue(np.array_equal(a, make_rng(7, "img", 3).random(4)))
		self.assertFalse(np.array_equal(a, make_rng(7, "img", 4).random(4)))
		self.assertFalse(np.array_equal(a, make_rng(7, "img2", 3).random(4)))


class TestAdd(unittest.TestCase):
	def testSingleRef(self):
		"""Checking that equal ring scores pick the smallest cell"""
		m = add_tool(P((2, 2)), P((2, 2)), frozenset(), AddParams(alpha=1, lambda_dist=0.5), G5)
		self.assertEqual(m.pairs, (((1, 2), (2, 2)),))
		scores = add_scores(P((2, 2)), (2, 2), perimeter_band(None, (2, 2), 1, G5), P((2, 2)), frozenset(),
							AddParams(alpha=1, lambda_dist=0.5))
		for value in scores.values():
			self.assertAlmostEqual(value, 2.0, places=12)

	def testSameSubentityPenalty(self):
		"""Checking that landing on another same-label part costs a full point"""
		refs = P((4, 4))
		sub = P((3, 4))
		params = AddParams(alpha=1, lambda_dist=0.0)
		scores = add_scores(refs, (4, 4), perimeter_band(refs, (4, 4), 1, PatchGrid(9, 9, 8)), refs, sub, params)
		self.assertEqual(scores[(3, 4)], 2.0)
		self.assertEqual(scores[(5, 4)], 3.0)
		m = add_tool(refs, refs, sub, params, PatchGrid(9, 9, 8))
		self.assertEqual(m.pairs, (((4, 3), (4, 4)),))

	def testTranslationInvariance(self):
		"""Checking that translating the scene translates the duplicate"""
		g = PatchGrid(24, 24, 8)
		refs = P((9, 9), (9, 10), (10, 10))
		ent = refs | P((8, 9), (8, 10), (10, 11), (11, 11))
		sub = P((11, 9))
		params = AddParams()
		base = add_tool(refs, ent, sub, params, g)

		def shift(s):
			return frozenset(PatchCoord(c[0] + 2, c[1] + 3) for c in s)
		moved = add_tool(shift(refs), shift(ent), shift(sub), params, g)
		self.assertEqual([((t[0] + 2, t[1] + 3), (r[0] + 2, r[1] + 3)) for t, r in base.pairs], list(moved.pairs))

	def testNoRing(self):
		"""Checking that a 1x1 grid leaves no candidate cell"""
		self.assertRaises(ToolException, add_tool, P((0, 0)), P((0, 0)), frozenset(), AddParams(), PatchGrid(1, 1, 8))


class TestRemove(unittest.TestCase):
	def testSingleTarget(self):
		"""Checking the background pool and lexicographic nearest pick"""
		m = remove_tool(P((2, 2)), P((2, 2)), frozenset(), RemoveParams(radius=1), G5)
		self.assertEqual(m.pairs, (((2, 2), (1, 2)),))

	def testSingleOpening(self):
		"""Checking that the only non-subentity neighbour serves every target"""
		targets = P((2, 2))
		sub = P((1, 2), (2, 1), (2, 3))
		m = remove_tool(targets, targets, sub, RemoveParams(radius=1), G5)
		self.assertEqual(m.pairs, (((2, 2), (3, 2)),))

	def testNoReference(self):
		"""Checking that a single-patch grid has nothing to copy from"""
		self.assertRaises(ToolException, remove_tool, P((0, 0)), P((0, 0)), frozenset(), RemoveParams(radius=1),
						  PatchGrid(1, 1, 8))

	def testEntityDominatedPool(self):
		"""Checking that the pool keeps entity patches when background is scarce"""
		g = PatchGrid(3, 3, 8)
		ent = g.all_coords() - P((0, 0))
		pool = remove_pool(P((1, 1)), ent, frozenset(), 1, g)
		self.assertEqual(pool, P((0, 1), (1, 0), (1, 2), (2, 1)))


class TestDistort(unittest.TestCase):
	def testShuffle(self):
		"""Checking the permutation kernel"""
		self.assertEqual(shuffle_kernel([PatchCoord(1, 1)], make_rng(42, "x")), [(1, 1)])
		cells = sorted(P((0, 0), (0, 1), (1, 0), (1, 1)))
		a = shuffle_kernel(cells, np.random.default_rng(42))
		self.assertEqual(sorted(a), cells)
		self.assertEqual(a, shuffle_kernel(cells, np.random.default_rng(42)))

	def testJitter(self):
		"""Checking zero-variance, forced-fallback and unconstrained jitter"""
		cells = sorted(P((1, 1), (1, 2), (3, 3)))
		self.assertEqual(jitter_kernel(cells, 0.0, G5, P(*cells), 16, make_rng(1, "j")), cells)
		far = jitter_kernel(cells, 1e-6, G5, P((4, 0)), 4, make_rng(1, "j"))
		self.assertEqual(far, [(4, 0)] * 3)
		free = jitter_kernel(cells, 3.0, G5, frozenset(), 4, make_rng(1, "j"))
		self.assertTrue(all(G5.contains(c) for c in free))

	def testStrip(self):
		"""Checking alternating circular strip shifts"""
		row = [PatchCoord(0, j) for j in range(4)]
		self.assertEqual(strip_kernel(row, 2, G5), [(0, 1), (0, 0), (0, 2), (0, 3)])
		self.assertEqual(strip_kernel([PatchCoord(2, 2)], 3, G5), [(2, 2)])
		self.assertEqual([strip_shift(s) for s in range(1, 5)], [1, -2, 3, -4])
		self.assertEqual(split_counts(7, 3), [3, 2, 2])
		col = [PatchCoord(i, 1) for i in range(5)]
		self.assertEqual(sorted(strip_kernel(col, 2, G5)), col)

	def testDistortTool(self):
		"""Checking kernel dispatch and positional pairing"""
		row = P((0, 0), (0, 1), (0, 2), (0, 3))
		m = distort_tool(row, row, DistortParams(kernel="strip", strips=2), G5, make_rng(0, "d"))
		self.assertEqual(m.pairs, (((0, 0), (0, 1)), ((0, 1), (0, 0)), ((0, 2), (0, 2)), ((0, 3), (0, 3))))
		one = distort_tool(P((3, 3)), P((3, 3)), DistortParams(), G5, make_rng(0, "d"))
		self.assertEqual(one.pairs, (((3, 3), (3, 3)),))
		still = distort_tool(row, row, DistortParams(kernel="jitter", sigma=0.0), G5, make_rng(0, "d"))
		self.assertTrue(all(t == r for t, r in still.pairs))
		self.assertRaises(ToolException, distort_tool, frozenset(), row, DistortParams(), G5, make_rng(0, "d"))


class TestFuse(unittest.TestCase):
	def testBand(self):
		"""Checking the fusion band around the overlap"""
		self.assertEqual(overlap_fusion_band(frozenset(), G5.all_coords(), 1, G5), frozenset())
		ball = P((2, 2), (1, 2), (3, 2), (2, 1), (2, 3))
		self.assertEqual(overlap_fusion_band(P((2, 2)), G5.all_coords(), 1, G5), ball)
		fg = G5.all_coords() - P((1, 2))
		self.assertEqual(overlap_fusion_band(P((2, 2)), fg, 1, G5), ball - P((1, 2)))

	def testFarthestPoints(self):
		"""Checking farthest point sampling order and tie breaks"""
		line = P(*[(0, j) for j in range(5)])
		self.assertEqual(farthest_point_sampling(line, 2), [(0, 2), (0, 0)])
		self.assertEqual(farthest_point_sampling(line, 1), [(0, 2)])
		self.assertEqual(sorted(farthest_point_sampling(line, 9)), sorted(line))

	def testOppositeRegion(self):
		"""Checking the opposite-side pool rules"""
		a, b = P((2, 1)), P((4, 4))
		fg, band = G5.all_coords(), P((2, 2))
		self.assertEqual(opposite_region((2, 2), a, b, fg, band), b)
		self.assertEqual(opposite_region((4, 3), a, b, fg, band), a)
		self.assertEqual(opposite_region((2, 2), frozenset(), frozenset(), fg, band), fg - band)
		self.assertEqual(opposite_region((2, 2), P((2, 1)), P((2, 3)), fg, band), fg - band)

	def testBestOffset(self):
		"""Checking offset search examples"""
		self.assertEqual(best_offset(P((2, 2)), frozenset(), 2, G5, frozenset()), None)
		self.assertEqual(best_offset(P((2, 2)), P((2, 3)), 1, G5, frozenset()), (0, 1))
		region = P((2, 2), (3, 2))
		opp = P((2, 3), (3, 3), (4, 2))
		self.assertEqual(best_offset(region, opp, 1, G5, frozenset()), (0, 1))
		self.assertEqual(offset_set(1), [(-1, 0), (0, -1), (0, 1), (1, 0)])
		self.assertEqual(len(offset_set(3)), 24)

	def testOffsetOrNearest(self):
		"""Checking shift and nearest fallbacks"""
		opp = P((2, 3), (4, 4))
		self.assertEqual(offset_or_nearest((2, 2), (0, 1), opp, G5, frozenset()), (2, 3))
		self.assertEqual(offset_or_nearest((4, 4), (1, 0), P((4, 3)), G5, frozenset()), (4, 3))
		self.assertEqual(offset_or_nearest((3, 4), None, opp, G5, frozenset()), (4, 4))
		self.assertRaises(ToolException, offset_or_nearest, (2, 2), (0, 1), frozenset(), G5, frozenset())

	def testDisjoint(self):
		"""Checking that entities without overlap are not fused"""
		m = fuse_tool(P((0, 0)), P((4, 4)), FuseParams(), G5, make_rng(0, "f"))
		self.assertEqual(len(m), 0)

	def testTwoSquares(self):
		"""Checking a one-seed fusion of two 2x2 entities sharing one patch"""
		a = P((1, 1), (1, 2), (2, 1), (2, 2))
		b = P((2, 2), (2, 3), (3, 2), (3, 3))
		params = FuseParams(band_radius=1, max_offset=1, seeds=1, reversed_fraction=0.0)
		m = fuse_tool(a, b, params, G5, make_rng(0, "f"))
		self.assertEqual(m.pairs, (((1, 2), (1, 1)), ((2, 1), (1, 1)), ((2, 2), (1, 1)),
								   ((2, 3), (3, 3)), ((3, 2), (3, 3))))
		overlap = a & b
		self.assertTrue(m.references <= (a - overlap) | (b - overlap))

	def testReversedCollisions(self):
		"""Checking that reversed pairs never repeat a target"""
		g = PatchGrid(1, 3, 8)
		a, b = P((0, 0), (0, 1)), P((0, 1), (0, 2))
		forward = fuse_tool(a, b, FuseParams(1, 1, 3, 0.0), g, make_rng(0, "f"))
		mirrored = fuse_tool(a, b, FuseParams(1, 1, 3, 1.0), g, make_rng(0, "f"))
		self.assertEqual(forward.pairs, (((0, 0), (0, 2)), ((0, 2), (0, 0))))
		self.assertEqual(mirrored.pairs, forward.pairs)

	def testReversedPairsAppended(self):
		"""Checking that reversed pairs mirror forward pairs"""
		a = P(*[(i, j) for i in range(1, 5) for j in range(1, 4)])
		b = P(*[(i, j) for i in range(2, 6) for j in range(3, 7)])
		g = PatchGrid(8, 8, 8)
		forward = fuse_tool(a, b, FuseParams(reversed_fraction=0.0), g, make_rng(3, "f"))
		mixed = fuse_tool(a, b, FuseParams(reversed_fraction=0.5), g, make_rng(3, "f"))
		self.assertEqual(mixed.pairs[:len(forward)], forward.pairs)
		for t, r in mixed.pairs[len(forward):]:
			self.assertIn((r, t), forward.pairs)
		self.assertLessEqual(len(mixed), len(forward) + math.floor(0.5 * len(forward) + 0.5))


class TestOracles(unittest.TestCase):
	"""Randomized comparisons against exhaustive reimplementations."""

	N_FIXTURES = 250

	def testAddOracle(self):
		"""Checking add_tool against an exhaustive ring scan"""
		rng = np.random.default_rng(101)
		for _ in range(self.N_FIXTURES):
			g = random_grid(rng)
			ent = random_blob(rng, g, int(rng.integers(1, g.n_patches // 2 + 2)))
			refs = random_subset(rng, ent)
			sub = random_blob(rng, g, int(rng.integers(1, 6))) - refs
			params = AddParams(int(rng.integers(1, 5)), float(rng.choice([0.0, 0.1, 0.5])))
			m = add_tool(refs, ent, sub, params, g)
			self.assertEqual(list(m.pairs), oracle_add_pairs(refs, ent, sub, params.alpha, params.lambda_dist, g))

	def testRemoveOracle(self):
		"""Checking remove_tool against brute-force nearest-in-pool"""
		rng = np.random.default_rng(202)
		for _ in range(self.N_FIXTURES):
			g = random_grid(rng)
			ent = random_blob(rng, g, int(rng.integers(1, g.n_patches // 2 + 2)))
			targets = random_subset(rng, ent)
			sub = random_blob(rng, g, int(rng.integers(1, 8))) - targets
			radius = int(rng.integers(1, 4))
			pool = oracle_remove_pool(targets, ent, sub, radius, g)
			if not pool:
				self.assertRaises(ToolException, remove_tool, targets, ent, sub, RemoveParams(radius), g)
				continue
			m = remove_tool(targets, ent, sub, RemoveParams(radius), g)
			self.assertEqual(m.targets, targets)
			for t, r in m.pairs:
				self.assertEqual(r, min(pool, key=lambda q: (l1(t, q), q)))

	def testBestOffsetOracle(self):
		"""Checking best_offset against every offset of the search window"""
		rng = np.random.default_rng(303)
		for _ in range(self.N_FIXTURES):
			g = random_grid(rng)
			region = random_blob(rng, g, int(rng.integers(1, 8)))
			opp = random_blob(rng, g, int(rng.integers(1, 12))) - region
			band = random_blob(rng, g, int(rng.integers(1, 4))) - opp
			max_offset = int(rng.integers(1, 5))
			self.assertEqual(best_offset(region, opp, max_offset, g, band),
							 oracle_best_offset(region, opp, max_offset, g, band))

	def testFarthestPointOracle(self):
		"""Checking FPS seeds against exact max-min selection on small point sets"""
		rng = np.random.default_rng(404)
		for _ in range(self.N_FIXTURES):
			g = random_grid(rng, 3, 8)
			pts = random_blob(rng, g, int(rng.integers(1, 13)))
			k = int(rng.integers(1, 4))
			seeds = farthest_point_sampling(pts, k)
			self.assertEqual(len(seeds), min(k, len(pts)))
			n = len(pts)
			ci, cj = Fraction(sum(p[0] for p in pts), n), Fraction(sum(p[1] for p in pts), n)
			self.assertEqual(seeds[0], min(pts, key=lambda p: (abs(p[0] - ci) + abs(p[1] - cj), p)))
			for m in range(1, len(seeds)):
				gap = {p: min(l1(p, s) for s in seeds[:m]) for p in pts}
				far = max(gap.values())
				self.assertEqual(seeds[m], min(p for p in pts if gap[p] == far))
			optimum = min(covering_radius(pts, combo) for combo in itertools.combinations(sorted(pts), len(seeds)))
			self.assertLessEqual(covering_radius(pts, seeds), 2 * optimum)

	def testFarthestPointFullOrder(self):
		"""Checking the whole FPS pick order against a greedy oracle, up to every point"""
		rng = np.random.default_rng(606)
		for _ in range(self.N_FIXTURES):
			g = random_grid(rng, 3, 10)
			pts = random_blob(rng, g, int(rng.integers(1, 30)))
			k = int(rng.integers(1, len(pts) + 2))
			self.assertEqual([tuple(s) for s in farthest_point_sampling(pts, k)], oracle_fps(pts, k))


class TestMappingInvariants(unittest.TestCase):
	def testRandomInvocations(self):
		"""Checking per-tool set constraints over 10k randomized tool calls"""
		rng = np.random.default_rng(505)
		calls = 0
		kernels = KERNELS
		while calls < 10000:
			g = random_grid(rng, 3, 10)
			ent = random_blob(rng, g, int(rng.integers(2, g.n_patches // 2 + 3)))
			part = random_subset(rng, ent)
			sub = random_blob(rng, g, int(rng.integers(1, 5))) - part

			m = add_tool(part, ent, sub, AddParams(int(rng.integers(1, 5))), g)
			self.assertTrue(m.references <= part)
			self.assertEqual(len(m.targets), len(m))

			radius = int(rng.integers(1, 3))
			try:
				m = remove_tool(part, ent, sub, RemoveParams(radius), g)
				self.assertFalse(m.references & part)
				self.assertFalse(m.references & sub)
				self.assertEqual(m.targets, part)
			except ToolException:
				self.assertFalse(oracle_remove_pool(part, ent, sub, radius, g))

			kernel = kernels[calls % 3]
			m = distort_tool(part, ent, DistortParams(kernel=kernel), g, rng)
			self.assertEqual(m.targets, part)
			if kernel == "jitter":
				self.assertTrue(m.references <= ent)
			else:
				self.assertEqual(sorted(r for _, r in m.pairs), sorted(part))

			other = random_blob(rng, g, int(rng.integers(2, g.n_patches // 2 + 3)))
			params = FuseParams(int(rng.integers(1, 3)), int(rng.integers(1, 4)), int(rng.integers(1, 5)), 0.0)
			m = fuse_tool(ent, other, params, g, rng)
			band = overlap_fusion_band(ent & other, ent | other, params.band_radius, g)
			self.assertTrue(m.targets <= band)
			self.assertTrue(m.references <= (ent | other))
			calls += 4


class TestPlanning(unittest.TestCase):
	def setUp(self):
		# 6x6 grid; dog and cat overlap at (2, 2); leg peripheral, body intermediate
		self.scene = scene_from_dict({
			"grid": {"h_p": 6, "w_p": 6, "patch_px": 8},
			"entities": [{"label": "dog", "patches": [0, 1, 2, 6, 7, 8, 12, 13, 14]},
						 {"label": "cat", "patches": [14, 15, 20, 21]}],
			"subentities": [{"label": "leg", "parent": 0, "level": "peripheral", "ratio": 1.0, "patches": [12]},
							{"label": "body", "parent": 0, "level": "intermediate", "ratio": 1.0, "patches": [1, 7]}],
		})
		self.pairs = [(0, 1)]

	def testCandidates(self):
		"""Checking the tool choice per part level"""
		found = candidates(self.scene, TOOLS, self.pairs)
		self.assertEqual([c.describe() for c in found], ["add:0", "remove:0", "distort:1", "fuse:0+1"])
		only = candidates(self.scene, ("distort",), self.pairs)
		self.assertEqual([c.describe() for c in only], ["distort:1"])

	def testPlanCounts(self):
		"""Checking seeded candidate selection"""
		self.assertEqual(len(plan_injections(self.scene, TOOLS, self.pairs, make_rng(1, "a"), 0)), 4)
		one = plan_injections(self.scene, TOOLS, self.pairs, make_rng(1, "a"), 2)
		self.assertEqual(len(one), 2)
		self.assertEqual(one, plan_injections(self.scene, TOOLS, self.pairs, make_rng(1, "a"), 2))

	def testRunToolAndSubject(self):
		"""Checking tool dispatch from a candidate and its question subject"""
		params = ToolParams()
		for c in candidates(self.scene, TOOLS, self.pairs):
			m = run_tool(c, self.scene, params, make_rng(1, "a", 1))
			self.assertEqual(m.tool, c.tool)
		subject = candidate_subject(Candidate("add", 0), self.scene)
		self.assertEqual(subject, {"entity": "dog", "subentity": "leg", "bbox": [0, 16, 8, 24],
								   "absent_bboxes": [[16, 16, 32, 32], [8, 16, 16, 24], [0, 24, 8, 32], [0, 8, 8, 16]]})
		fused = candidate_subject(Candidate("fuse", pair=(0, 1)), self.scene)
		self.assertEqual(fused["entity"], "dog")

	def testAbsentBoxes(self):
		"""Checking that no absent box holds a patch of a same-label subentity"""
		scene = scene_from_dict({
			"grid": {"h_p": 6, "w_p": 6, "patch_px": 8},
			"entities": [{"label": "dog", "patches": [0, 1, 6, 7]}, {"label": "dog", "patches": [4, 5, 10, 11]}],
			"subentities": [{"label": "leg", "parent": 0, "level": "peripheral", "ratio": 1.0, "patches": [6]},
							{"label": "leg", "parent": 1, "level": "peripheral", "ratio": 1.0, "patches": [11]}],
		})
		boxes = absent_boxes(scene, 0)
		# both dog boxes hold a leg; right, below and above the first leg are free
		self.assertEqual(boxes, [[8, 8, 16, 16], [0, 16, 8, 24], [0, 0, 8, 8]])
		legs = [scene.subentity_bbox(k) for k in range(2)]
		for b in boxes:
			for leg in legs:
				self.assertTrue(b[2] <= leg.x_min or leg.x_max <= b[0] or b[3] <= leg.y_min or leg.y_max <= b[1])


class TestExport(unittest.TestCase):
	def setUp(self):
		self.root = tempfile.mkdtemp()

	def tearDown(self):
		shutil.rmtree(self.root)

	def testExportDocument(self):
		"""Checking the mapping export fields and reader"""
		m = remove_tool(P((2, 2)), P((2, 2)), frozenset(), RemoveParams(radius=1), G5)
		doc = export_mapping(m, 9, {"radius": 1}, image_id="img", injection_id="img-0")
		self.assertEqual(doc["pairs"], [[12, 7]])
		self.assertEqual(doc["target_bbox"], [32, 32, 48, 48])
		self.assertEqual(doc["artifact_type"], "omission")
		path = os.path.join(self.root, "m.json")
		write_mapping(path, doc)
		back, back_doc = read_mapping(path)
		self.assertEqual(back, m)
		self.assertEqual(back_doc, doc)

	def testSameSeedSameBytes(self):
		"""Checking that a fixed seed reproduces the export byte for byte"""
		cells = P(*[(i, j) for i in range(1, 4) for j in range(1, 4)])
		texts = []
		for name in ("a.json", "b.json"):
			m = distort_tool(cells, cells, DistortParams(), G5, make_rng(5, "img", 1))
			write_mapping(os.path.join(self.root, name), export_mapping(m, 5))
			with open(os.path.join(self.root, name), "rb") as f:
				texts.append(f.read())
		self.assertEqual(texts[0], texts[1])

	def testReaderRejectsMismatch(self):
		"""Checking that a mapping whose type contradicts its tool is refused"""
		m = add_tool(P((2, 2)), P((2, 2)), frozenset(), AddParams(alpha=1), G5)
		doc = export_mapping(m, 0)
		doc["artifact_type"] = "fusion"
		path = os.path.join(self.root, "bad.json")
		with open(path, "w") as f:
			json.dump(doc, f)
		self.assertRaises(ToolException, read_mapping, path)
		doc["schema_version"] = 99
		with open(path, "w") as f:
			json.dump(doc, f)
		self.assertRaises(ToolException, read_mapping, path)


if __name__ == '__main__':
	unittest.main()
