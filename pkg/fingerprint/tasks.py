from celery import shared_task

from . import checkpoint
from .config import load_run_config
from .preprocessing import load_windows
from .training import run_fold


@shared_task
def train_fold(windows_path, fold, k, seed, config, checkpoint_path=None):
    """
    Train and score one cross-validation fold; ``config`` is ``RunConfig.to_dict()``.

    With ``checkpoint_path`` the fold's model is saved there as well.
    """
    run = load_run_config(overrides=config)
    window_set = load_windows(windows_path)
    encoder_config = run.encoder_config(window_set.channel_count, window_set.window_length)
    params, report = run_fold(window_set.samples(), encoder_config, run.training_config(), k, fold, seed)
    if checkpoint_path:
        params.metadata.update({'fold': fold, 'folds': k})
        checkpoint.save(checkpoint_path, params)
    result = report.to_dict()
    result['fold'] = fold
    return result
