"""
Tests for the QPL semantics toolkit.
"""
