from kegnnflow.train.harness import EarlyStopping, RunResult, TrainConfig, accuracy, early_stop_check, loss, train

__all__ = ["EarlyStopping", "RunResult", "TrainConfig", "accuracy", "early_stop_check", "loss", "train"]
