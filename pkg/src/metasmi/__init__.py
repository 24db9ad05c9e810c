"""Semi-supervised first-order meta-learning with per-class submodular
mutual information selection over synthetic few-shot episodes."""

from .episodes import Episode, EpisodeShape, SyntheticDataset, gen_synthetic, sample_episode, split_labeled
from .kernel import Embeddings, Kernel, cosine_kernel, onehot_embed, prob_embed
from .maximize import GreedyResult, MaximizerKind, brute_force_max, lazy_greedy, naive_greedy, stochastic_greedy
from .meta import MetaTestResult, Schedules, TrainConfig, adapt, meta_step, meta_test, meta_train, tau_in, tau_out
from .net import LossBreakdown, ParamVector, forward, init_params, loss_and_grad, sgd_step
from .select import Budget, SelectedSubset, inner_select, outer_select, per_class_select, selection_accuracy
from .smi import GainState, SetFunctionKind, commit, fl_eval, flmi_eval, gc_eval, gcmi_eval, marginal_gain
from .strategy import StrategyKind, acquire, parse_strategy

__version__ = "0.1.0"
