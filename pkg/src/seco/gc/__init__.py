"""Garbled circuits: circuit construction, garbling/evaluation and oblivious transfer."""
