"""Bundled workload fixtures."""
