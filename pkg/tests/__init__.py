"""Tests for malproc monitor."""
