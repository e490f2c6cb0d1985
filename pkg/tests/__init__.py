"""Tests for multinormex."""
