"""Safe off-policy RL from demonstrations.

SAC backbone with demonstration-anchored critic bounds, a state discriminator
gate, self-contained constrained 2-D environments, a tabular value-bound
oracle, and the evaluation/trade-off tooling around them.
"""

__version__ = "0.1.0"
