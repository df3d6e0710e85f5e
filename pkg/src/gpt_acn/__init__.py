"""Desk-scale task-oriented dialogue as natural language generation.

A decoder-only transformer backbone with residual adapter layers and a
copy-network output head, trained with a masked left-to-right LM objective
on naturally linearized dialogues, with staged inference that queries a
database mid-generation.
"""

__version__ = "0.1.0"
