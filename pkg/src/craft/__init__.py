"""Claim-centric multi-video report generation pipeline.

The engine turns a persona-grounded query plus a set of relevant videos
into a citation-backed report: videos are chunked and transcribed, a
query-conditioned keyframe clip is selected per video, atomic claims are
extracted and refined through a hybrid critic loop, and the surviving
evidence is pooled, reranked, and consolidated with citation merging.
All model access goes through pluggable backends (deterministic mocks or
remote inference services), so the pipeline is runnable and testable
without GPUs.
"""

__version__ = "0.1.0"
