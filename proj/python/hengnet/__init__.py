"""Python interface to the HENG transport simulator and state estimator."""

from ._hengnet import (
    HengDomainError,
    HengParseError,
    __version__,
    characteristics_oracle,
    evaluate,
    generate_dataset,
    mix_at_node,
    query,
    simulate,
    topology_hash,
    train,
    validate_network,
)

__all__ = [
    "HengDomainError",
    "HengParseError",
    "__version__",
    "characteristics_oracle",
    "evaluate",
    "generate_dataset",
    "mix_at_node",
    "query",
    "simulate",
    "topology_hash",
    "train",
    "validate_network",
]
