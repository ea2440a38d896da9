"""Desk-scale dual-shot face detection pipeline.

Anchor design, feature enhancement, progressive anchor losses, improved
anchor matching, and the verification tooling (gradient checks, brute-force
oracles, toy training runs) needed to exercise them end to end at laptop
scale.
"""

__version__ = "0.1.0"
