"""Tests for lsvlab."""
