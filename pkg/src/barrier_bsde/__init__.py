"""Forward deep-BSDE pricer for barrier options.

Trains per-step hedge networks and an initial-value network so that the
rolled-forward trading strategy, frozen at barrier breach, replicates
the barrier/final payoff; validated against closed-form and Monte-Carlo
oracles.
"""

from .barriers import (BarrierSpec, InstrumentSpec, LevelSchedule, TriggerState,
                       condition, fp_update, initial_trigger_state, payoff_gB,
                       terminal_payoff, trig_update)
from .oracles import (BarrierQuote, VanillaQuote, barrier_up_out_call,
                      bridge_no_breach_prob, bs_vanilla, mc_price)
from .sde import (MarketModel, PathBatch, TimeGrid, fixed_x0, path_rng,
                  sample_x0, simulate_paths)
from .trainer import (Generator, ModelParams, NumericFault, TrainConfig,
                      TrainReport, init_model_params, load_checkpoint, price,
                      risk_neutral_generator, rollout, save_checkpoint, train)

__version__ = "0.1.0"
