# Configuration file for the Sphinx documentation builder.
#
# For the full list of built-in configuration values, see the documentation:
# https://www.sphinx-doc.org/en/master/usage/configuration.html

# -- Project information -----------------------------------------------------
import jaxcfm  # noqa: F401

project = "jaxcfm"
copyright = "2025, jaxcfm developers"
author = "jaxcfm developers"

# -- General configuration ---------------------------------------------------

extensions = [
    "sphinx.ext.autodoc",
    "sphinx.ext.autosummary",
    "sphinx.ext.napoleon",
    "sphinx.ext.mathjax",
    "sphinx_gallery.gen_gallery",
    "sphinx.ext.viewcode",
]

autoclass_content = "both"  # include both class docstring and __init__
autodoc_default_flags = ["members"]
autosummary_generate = True  # Make _autosummary files and include them

# Napoleon settings
napoleon_google_docstring = False
napoleon_use_rtype = False
exclude_patterns = []


# Sphinx gallery
from sphinx_gallery.scrapers import matplotlib_scraper  # noqa: E402


class matplotlib_svg_scraper:
    def __repr__(self):
        return self.__class__.__name__

    def __call__(self, *args, **kwargs):
        return matplotlib_scraper(*args, format="svg", **kwargs)


sphinx_gallery_conf = {
    "examples_dirs": ["../examples"],
    "gallery_dirs": "gen_examples",
    "reference_url": {
        "jaxcfm": None,
    },
    "backreferences_dir": "gen_modules/backreferences",
    "doc_module": ("jaxcfm"),
    "image_scrapers": (matplotlib_svg_scraper(),),
}

# -- Options for HTML output -------------------------------------------------

html_theme = "sphinx_rtd_theme"
