"""VAE-LSTM predictor of future walker states and depth panoramas."""

__version__ = "0.1.0"
