"""Exception types shared across the simulator."""


class SimError(Exception):
    """Base class for simulator errors."""


class ConfigError(SimError):
    """Malformed topology or experiment configuration."""


class TopologyError(ConfigError):
    """Invalid topology description (duplicate ids, bad references)."""


class NodeFailed(SimError):
    """Operation issued from or to a node whose domain is down."""


class HomeDomainFailed(SimError):
    """The address's home failure domain is down and no redundancy covers it."""


class UnknownDomain(SimError):
    """Referenced failure domain does not exist."""


class InsufficientDomains(SimError):
    """Not enough distinct Up failure domains for the requested redundancy."""


class AllReplicasFailed(SimError):
    """Every replica placement of the region is down."""


class NoSourceReplica(SimError):
    """Replica rebuild requested with no surviving source copy."""


class ShardDomainFailed(SimError):
    """Erasure-coded shard's home domain is down."""


class TooManyFailures(SimError):
    """More shard domains lost than the code's parity can reconstruct."""


class LogDomainFailed(SimError):
    """Log placement domain is down; the transaction aborts."""


class CheckpointDomainFailed(SimError):
    """Checkpoint placement domain is down."""


class DumpDomainFailed(SimError):
    """Process-dump target domain is down at failure time."""


class MajorityLost(SimError):
    """More than n of 2n+1 stage-replica domains failed."""


class NoRecoverableState(SimError):
    """Migration or restore requested with no dump/checkpoint available."""


class UnrecoverableLoss(SimError):
    """The attached mechanism's contract cannot cover the injected failure.

    Carried (not hidden) into verdicts: it is the documented outcome for
    scenarios outside a mechanism's coverage, e.g. data-domain loss with
    no redundancy attached.
    """


class CrashInterrupt(Exception):
    """Internal control-flow signal: a planned failure fired mid-operation.

    Not a SimError; the run loop catches it and hands control to recovery.
    """
