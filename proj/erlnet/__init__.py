from ._erlnet import (
    delta_decode,
    delta_encode,
    gradient_suite,
    image_metrics,
    quantize,
    synth_audio_features,
    synthetic_frame,
    synthetic_sequences,
)

__all__ = [
    "delta_decode",
    "delta_encode",
    "gradient_suite",
    "image_metrics",
    "quantize",
    "synth_audio_features",
    "synthetic_frame",
    "synthetic_sequences",
]
