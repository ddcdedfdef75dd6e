#!/usr/bin/env python

from setuptools import setup

DESC = """pyarti synthesizes training data for structural visual artifacts. It injects duplication, omission, distortion and fusion artifacts into real images by remapping patches, curates the results with a metric gate and a judge model, and writes paired annotation records and multi-turn VQA samples."""

setup(name='pyarti',
      version='0.1.0',
      author='pyarti developers',
      description='Patch-level artifact injection for artifact-aware data synthesis',
      long_description=DESC,
      license="MIT License",
      platforms=["any"],
      packages=['pyarti', 'pyarti.interfaces'],
      package_dir={'pyarti': 'pyarti'},
      package_data={'pyarti': ['templates/*.txt', 'templates/*.yaml']},
      python_requires='>=3.8',
      install_requires=['numpy', 'Pillow', 'PyYAML', 'requests'],
      extras_require={'rle': ['pycocotools'], 'lpips': ['lpips', 'torch']},
      entry_points={'console_scripts': ['pyarti = pyarti.cli:main']},
     )
