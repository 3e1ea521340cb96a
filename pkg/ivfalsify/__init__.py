"""
Instrument validity falsification toolkit

Exact-rational tests of the exclusion restriction jointly with restrictions on
instrument-response types, for discrete treatments and instruments.
"""

__version__ = '0.1.0'
