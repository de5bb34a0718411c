"""Termination and liveness proofs for parameterized programs.

The library builds well-founded proof spaces (Hoare triples plus ranking
formulas) from termination proofs of sampled lassos, and checks that the
generated space covers every program behaviour by a language inclusion
between quantified predicate automata.
"""

__version__ = "0.1.0"
