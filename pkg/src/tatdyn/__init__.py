"""Twist-and-turn dynamics of power-law XY spin models.

Engines: exact Dicke-sector evolution (``collective``), the linearized
bosonic model (``bosonic``), rotor/spin-wave theory (``spinwave``) and the
discrete truncated Wigner approximation (``dtwa``). ``observables`` holds
the engine-agnostic analysis and ``cli`` the batch runner.
"""
__version__ = "0.1.0"
