"""iotminer: turn raw industrial sensor streams into labeled event logs.

Pipeline stages: ingest -> featurize -> cluster -> profile -> label ->
build event log -> evaluate. Each stage is usable on its own; the
``iotminer`` CLI chains them.
"""

__version__ = "0.1.0"
