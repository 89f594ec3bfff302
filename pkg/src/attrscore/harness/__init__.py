"""Benchmark harness: dataset ingestion, summary generation, run
orchestration and persistence, and report rendering."""
