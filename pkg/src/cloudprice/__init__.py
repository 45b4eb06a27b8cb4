"""Equilibrium, revenue and simulation tools for a cloud provider selling
capacity through a fixed-price (PAYG) channel, a bid-priority spot market,
or both at once."""
from .equilibrium import (HybridEquilibrium, PriceCase, SpotEquilibrium, audit_incentive_compatibility,
                          expected_payment, payment_curve, solve_common_threshold, solve_hybrid_cutoffs,
                          solve_spot_cutoffs)
from .model import (ClassParams, CutoffVector, InvalidParams, InvalidPrice, MarketParams, OutOfRange, SolverError,
                    TruncatedExponential, Uniform, Unstable, load_config, market, parse_config, reference_market)
from .revenue import (Regime, RevenueReport, Sampler, optimize_price, revenue_hybrid, revenue_payg,
                      revenue_ranking_study, revenue_spot)
from .sim import Hybrid, PaygOnly, SimStats, SpotOnly, compare_waiting_curve, simulate
from .waiting import ParallelMM1Priority, WaitingTimeModel, cumulative_wait, waiting_time

__version__ = "0.1.0"
