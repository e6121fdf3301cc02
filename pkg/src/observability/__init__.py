"""Structured logging and optional Prometheus metrics."""
