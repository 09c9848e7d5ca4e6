"""Tests for softread."""
