"""Decoder laboratory for stabilizer quantum error-correcting codes.

Pipeline: exact continuous extension of syndrome measurement, an MLP that
approximates it, a Transformer syndrome decoder, a frozen-oracle
re-optimization loop exploiting stabilizer degeneracy, and an evaluation
bench for logical error rates and structural metrics.
"""

__version__ = "0.1.0"
