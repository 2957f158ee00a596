"""
Ambient kernels: errors, envelopes, safe execution, coercion, worker pool,
logging, digests and seeded random streams.
"""
