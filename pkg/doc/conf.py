# -*- coding: utf-8 -*-
#
# pyarti documentation build configuration file.

import sys, os

# Document the package from the source tree.
sys.path.insert(0, os.path.abspath('..'))

extensions = ['sphinx.ext.autodoc']

templates_path = ['_templates']
source_suffix = '.rst'
master_doc = 'index'

project = u'pyarti'
copyright = u'2026, pyarti developers'

# The short X.Y version.
version = '0.1'
# The full version, including alpha/beta/rc tags.
release = '0.1.0'

exclude_patterns = ['_build']
pygments_style = 'sphinx'

# -- Options for HTML output ---------------------------------------------------

html_theme = 'default'
html_static_path = []
htmlhelp_basename = 'pyartidoc'

# -- Options for LaTeX output --------------------------------------------------

latex_documents = [
  ('index', 'pyarti.tex', u'pyarti Documentation',
   u'pyarti developers', 'manual'),
]
