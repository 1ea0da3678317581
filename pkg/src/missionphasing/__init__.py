"""Resource-driven mission phasing.

Planning for capacity-limited agents that may exchange their resource
bundle at chosen switching states (single agent) or at chosen times
(cooperating agents), solved exactly through compact MILPs on an
embedded simplex / branch-and-bound engine.
"""

from .constrained import (CapacitySpec, ResourceBundle, build_constrained_milp,
                          compute_x_bound, solve_constrained)
from .linprog import (BINARY, CONTINUOUS, LpInfeasible, LpUnbounded,
                      MilpModel, MilpSolution, SolverConfig, SolverError,
                      TooManyBinaries, solve_lp, solve_milp)
from .mdp import (InitialDistribution, Mdp, NonConvergent, NonTransient,
                  OccupationMeasure, Policy, evaluate_phase_plan,
                  evaluate_policy, extract_policy, solve_unconstrained,
                  validate_transient)
from .mrmp import (AllocationSchedule, MultiagentProblem, ReallocSpec,
                   build_mrmp_milp, score_schedule, solve_mrmp,
                   solve_mrmp_oneshot)
from .srmp import (PhasePlan, PhaseSwitchSpec, build_srmp_milp,
                   extract_phase_plan, solve_fixed_phases_abstract, solve_srmp)
from .baselines import (OracleResult, StateSpaceTooLarge, brute_force,
                        expand_mdp_baseline)
from .domains import (GridWorldSpec, RetryExhausted, SplitMix64, gen_gridworld,
                      load_running_example, load_two_agent_example)

__version__ = "0.1.0"
