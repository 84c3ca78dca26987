"""Censored quantile random forests.

Forests that predict the conditional quantile process of a right-censored
response over a grid of levels, with censoring adjusted during tree growth
via inverse-probability-of-censoring weights, out-of-bag tuning, and
refit-based conditional feature importance.
"""

from .data import Dataset, load_config, load_model, read_csv, save_config, \
    save_model, write_csv
from .errors import (BadInput, CalibrationFailure, DegenerateBaseline,
                     EmptyNode, FoldDegenerate, GcqrfError, InvalidTau,
                     KnockoffFailure, NoOOBCoverage, NoUncensored, ParseError,
                     UnsupportedVersion)
from .evaluate import (default_eval_grid, ipcw_iqloss, iqmse, na_baseline,
                       qmse, relative_metric, standard_iqloss)
from .forest import (Forest, ForestConfig, OOBResult, TuningSpace,
                     draw_subsample, fit_forest, forest_predict, oob_iqloss,
                     oob_predictions, paper_tuning_space, predict_matrix,
                     reduced_tuning_space, tune)
from .importance import (ImportanceReport, KnockoffSampler, MuteStrategy,
                         gaussian_knockoffs, importance_cross_fit, mute)
from .loss import (QuantileProcess, TauGrid, check_loss, isotonize,
                   node_iqloss, node_qloss, split_gain)
from .simdata import (FKind, GKind, SimOracle, SimSetting, calibrate_censoring,
                      f_linear, f_nonlinear, gen_dataset, paper_snr_grid,
                      sigma_from_snr, true_quantile, vimp_preset)
from .survival import (StepSurvival, TailRule, censoring_fit, ipcw_weight,
                       ipcw_weights, nelson_aalen)
from .tree import (Internal, Leaf, TreeConfig, best_split, candidate_cuts,
                   grow_tree, tree_predict)

__version__ = "0.1.0"
