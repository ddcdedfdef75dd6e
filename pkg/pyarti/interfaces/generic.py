#!/usr/bin/env python
"""In-process worker pool for pyarti work units.
"""

__author__ = "pyarti developers"
__date__ = "18 October 2026"

import threading


class GenericInterface:
	"""Runs each work unit in the thread the scheduler gives it.
	num_workers caps how many images are processed at the same time."""

	def __init__(self, num_workers=1):
		if num_workers < 1:
			raise ValueError("num_workers must be at least 1")
		self._capacity = num_workers
		self._free = list(range(num_workers))
		self._lock = threading.Lock()

	def get_available_workers(self):
		"""Worker slots not running a unit; [] when all are busy."""
		with self._lock:
			return list(self._free)

	def reserve_worker(self, worker):
		with self._lock:
			self._free.remove(worker)

	def worker_finished(self, worker):
		with self._lock:
			self._free.append(worker)
			self._free.sort()

	def execute_task(self, task, worker):
		"""Run the unit; exceptions propagate to the scheduler."""
		task.task_finished(result=task.run())

	def get_status(self):
		with self._lock:
			return {"num_total_workers": self._capacity,
					"num_active_workers": self._capacity - len(self._free)}
