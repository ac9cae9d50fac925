"""motifscope: ego transfer network motif mining for DeFi transactions.

Pipeline: ingest token-transfer records -> per-transaction ego transfer
networks -> typed motif / edge-list features -> method-group classifiers
-> pruned-tree itemset signatures -> account activity profiles.
"""

__version__ = "0.1.0"
