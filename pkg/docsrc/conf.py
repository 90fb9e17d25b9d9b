# -*- coding: utf-8 -*-
#
# dpds documentation build configuration file.
#
# This file is execfile()d with the current directory set to its
# containing dir.

import sys, os
import sphinx_bootstrap_theme

sys.path.insert(0, os.path.abspath('../'))

import dpds

# -- General configuration ------------------------------------------------

extensions = ['sphinx.ext.autodoc',
              'sphinx.ext.autosummary',
              'sphinx.ext.viewcode',
              'sphinxcontrib.bibtex',
              'sphinx.ext.mathjax',
              'sphinx.ext.doctest',
              'sphinx.ext.intersphinx',
              'numpydoc']

bibtex_bibfiles = ['_static/references.bib']

templates_path = ['_templates']
source_suffix = '.rst'
master_doc = 'index'

project = 'dpds'
copyright = '2024-, dpds developers'
author = 'dpds developers'

version = dpds.__version__
release = dpds.__version__

language = None
exclude_patterns = ['_build', 'Thumbs.db', '.DS_Store', 'tests/*']
pygments_style = 'sphinx'
todo_include_todos = False

# -- Options for HTML output ----------------------------------------------

html_theme = 'bootstrap'
html_theme_path = sphinx_bootstrap_theme.get_html_theme_path()
html_title = "%s v%s Manual" % (project, version)

html_theme_options = {
    'navbar_title': "dpds",
    'navbar_sidebarrel': False,
    'nosidebar': True,
    'globaltoc_depth': 2,
    'globaltoc_includehidden': "true",
    'navbar_fixed_top': "true",
    'source_link_position': 'footer',
    'bootswatch_theme': "yeti",
    'bootstrap_version': "3",
    'navbar_links': [
                     ("Installation", "installation"),
                     ("Tutorial", "tutorial"),
                     ("API", "api"),
                     ("References", "references"),
                     ],
}

html_static_path = ['_static']
htmlhelp_basename = 'dpdsdoc'

# -- Options for manual page output ---------------------------------------

man_pages = [
    (master_doc, 'dpds', u'dpds Documentation',
     [author], 1)
]

# -- Extension configuration ----------------------------------------------

autosummary_generate = True
numpydoc_show_class_members = False
autodoc_default_options = {
    'members': True,
    'undoc-members': True
}

intersphinx_mapping = {
    'python': ('https://docs.python.org/3/', None),
    'numpy': ('https://numpy.org/doc/stable/', None),
    'pandas': ('https://pandas.pydata.org/pandas-docs/stable/', None),
    'scipy': ('https://docs.scipy.org/doc/scipy/', None),
}
