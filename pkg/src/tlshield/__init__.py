"""Safe LTL-constrained reinforcement learning toolkit.

Subpackages cover the full pipeline: LTL parsing and lasso-word semantics
(`ltl`), generalized Buchi automata with a frontier-tracking embedding
(`automaton`, `equiv`), the on-the-fly product process (`product`), the
reward and shaping machinery (`reward`), simulated plants (`envs`),
Gaussian-process residual models (`gp`), the ECBF quadratic-program safety
filter (`cbf`), a small neural-network substrate (`nn`), modular DDPG
(`rl`), the training/evaluation loop (`trainer`), exact finite-model
analysis (`oracle`), and the command-line front end (`cli`).
"""

__version__ = "0.1.0"
