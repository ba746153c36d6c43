"""Prokopius: a distributed public-key time-stamping service, simulated.

The package is organized around the protocol stack:

- ``encoding``   canonical byte encoding and domain-separated hashing
- ``hashtree``   linking trees, authenticated search trees, the time tree
- ``crypto``     signatures, quorum certificates, secret sharing, the
                 threshold coin and its dealer-free re-keying
- ``broadcast``  verifiable consistent (echo) broadcast
- ``agreement``  randomized binary agreement and validated multivalued
                 agreement
- ``node``       the member-node state machine (round-change pipeline and
                 client queries)
- ``narses``     the flow-level discrete-event network simulator
- ``harness``    scenario files, the CLI, metrics, figures, proof bundles
"""

__version__ = "0.1.0"
