"""
Shared helpers: configuration, errors, exact rationals and report envelopes
"""
