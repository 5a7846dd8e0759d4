"""
Tests for jaxcfm
"""
