#!/usr/bin/env python
"""Master/worker execution of per-image work units.

A PyArti_Master queues one PyArti_Task per work unit; a scheduler thread
hands queued units to free workers of an interface in submission order and
runs each in its own thread.  Finished units come back through get_result.
"""

__author__ = "pyarti developers"
__date__ = "18 October 2026"

import logging
import threading
import time

from .interfaces import generic

LOG_FORMAT = "%(asctime)s %(levelname)s %(message)s"


class PyArti_List:
	"""A list with the atomic take/wait operations the scheduler needs."""

	def __init__(self):
		self._lock = threading.Lock()
		self._add_event = threading.Condition(self._lock)
		self._data = []

	def __len__(self):
		with self._lock:
			return len(self._data)

	def append(self, item):
		"""Atomically appends an item and wakes any waiting threads."""
		with self._add_event:
			self._data.append(item)
			self._add_event.notify_all()

	def take(self, wanted=(), blocking=False):
		"""Removes the first item that is one of wanted (any item if wanted is empty).
		Returns None when nothing matches and blocking is False."""
		wanted = list(wanted)
		with self._add_event:
			while True:
				for item in self._data:
					if not wanted or any(item is w for w in wanted):
						self._data.remove(item)
						return item
				if not blocking:
					return None
				self._add_event.wait()


class TaskException(Exception):
	"""Represents an exception caused by a work unit or its submission."""
	def __init__(self, value):
		self.param = value
	def __str__(self):
		return repr(self.param)


class InterfaceException(Exception):
	"""Represents an unusable execution or client interface."""
	def __init__(self, value):
		self.param = value
	def __str__(self):
		return repr(self.param)


class PyArti_Task:
	"""One work unit: a callable, its arguments and, once run, its result or error."""

	SUBMITTED = "submitted"
	RUNNING = "running"
	ERROR = "error"
	FINISHED = "finished"

	def __init__(self, name, executable, finished_queue, input_data=()):
		if not callable(executable):
			raise TaskException("executable must be a callable")
		self.executable = executable
		self.input_data = tuple(input_data)
		self.name = name
		self.state = self.SUBMITTED
		self.result = None
		self.error = None
		self.worker = None
		self.submitted_at = time.time()
		self.finished_at = None
		self._finished_queue = finished_queue
		self._on_release = None

	def __str__(self):
		return self.name

	__repr__ = __str__

	def run(self):
		return self.executable(*self.input_data)

	def task_finished(self, task_err=None, result=None):
		"""Called by the interface when the unit has run, with its error or result."""
		self.error = task_err
		self.result = None if task_err else result
		if task_err:
			logging.info("Task "+self.name+" had an error: "+str(task_err))
		else:
			logging.debug("Task "+self.name+" finished")
		self.finished_at = time.time()
		self.state = self.ERROR if task_err else self.FINISHED
		self._finished_queue.append(self)
		if self._on_release:
			self._on_release(self.worker)

	def get_total_time(self):
		"""Seconds from submission to completion, None while unfinished."""
		if self.finished_at is None:
			return None
		return self.finished_at - self.submitted_at


class PyArti_Scheduler:
	"""Hands queued units to interface workers from a separate thread."""

	def __init__(self, task_queue, interface):
		self._task_queue = task_queue
		self._interface = interface
		self._running = False
		self._state_lock = threading.Lock()
		self._worker_lock = threading.Condition()

	def start(self):
		with self._state_lock:
			if self._running:
				return
			self._running = True
		logging.debug("PyArti_Scheduler started")
		threading.Thread(target=self._loop, daemon=True).start()

	def _release(self, worker):
		with self._worker_lock:
			try:
				self._interface.worker_finished(worker)
			except Exception:
				logging.warning("Interface failed to release worker "+repr(worker))
			self._worker_lock.notify()

	def _free_workers(self):
		try:
			workers = self._interface.get_available_workers()
		except Exception:
			return [None]
		return workers if isinstance(workers, list) else [None]

	def _claim(self, task, worker):
		task.worker = worker
		task._on_release = self._release
		try:
			self._interface.reserve_worker(worker)
		except Exception:
			logging.warning("Interface failed to reserve worker "+repr(worker))

	def _loop(self):
		"""Only this thread removes units from the queue or reserves workers."""
		while True:
			with self._state_lock:
				if len(self._task_queue) == 0:
					self._running = False
					break
			with self._worker_lock:
				workers = self._free_workers()
				if not workers:
					self._worker_lock.wait(timeout=1.0)
					continue
				task = self._task_queue.take()
				if task is None:
					continue
				self._claim(task, workers[0])
			logging.debug("Executing task "+task.name+" on worker "+repr(task.worker))
			task.state = PyArti_Task.RUNNING
			threading.Thread(target=self._execute, args=(task,), daemon=True).start()
		logging.debug("PyArti_Scheduler finished")

	def _execute(self, task):
		"""Any interface exception finishes the unit with that error."""
		try:
			self._interface.execute_task(task, task.worker)
		except Exception as e:
			task.task_finished(e)


class PyArti_Master:
	"""Submits work units to the underlying interface and collects their results."""

	def __init__(self, interface=None, loglevel=logging.CRITICAL):
		logging.basicConfig(level=loglevel, format=LOG_FORMAT)
		if interface:
			if not callable(getattr(interface, "execute_task", None)):
				raise InterfaceException("Interface must have execute_task() function.")
			self._interface = interface
		else:
			self._interface = generic.GenericInterface()
		self._submitted = []
		self._queued = PyArti_List()
		self._finished = PyArti_List()
		self._scheduler = PyArti_Scheduler(self._queued, self._interface)

	def _check_tasks(self, tasks):
		if not self._submitted:
			raise TaskException("No tasks have been submitted")
		for t in tasks:
			if not isinstance(t, PyArti_Task):
				raise TaskException("Function requires either a task, a list of tasks, or None")
			if not any(t is s for s in self._submitted):
				raise TaskException("Task has not been submitted")

	def submit_task(self, executable, input_data=(), name=None):
		"""Queue executable(*input_data) and return the task."""
		if not callable(executable):
			raise TaskException("Executable must be a callable")
		name = name or (getattr(executable, "__name__", "task")+"_"+str(len(self._submitted)))
		task = PyArti_Task(name, executable, self._finished, input_data)
		self._submitted.append(task)
		self._queued.append(task)
		self._scheduler.start()
		return task

	def get_result(self, task=None, blocking=True):
		"""Result of a finished task, re-raising its error.
		task may be None (any task) or a list (any of them); returns (None, None)
		when not blocking and nothing has finished."""
		if task is None:
			tasks = []
		elif isinstance(task, list):
			tasks = task
		else:
			tasks = [task]
		self._check_tasks(tasks)
		done = self._finished.take(tasks, blocking)
		if done is None:
			return None, None
		if done.error:
			raise done.error
		return done, done.result

	def get_status(self):
		with self._scheduler._worker_lock:
			try:
				status = self._interface.get_status()
			except Exception:
				status = {"interface_status": "error"}
		if not isinstance(status, dict):
			status = {"interface_status": "error"}
		status["tasks"] = list(self._submitted)
		return status
