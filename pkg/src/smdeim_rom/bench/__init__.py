"""Benchmark CLI: full-order runs, offline builds, online ROM runs and
sweep campaigns, with CSV/TSV reporting."""
