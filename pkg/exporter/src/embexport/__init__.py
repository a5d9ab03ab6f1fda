"""Frame-embedding export from pretrained speech encoders."""

from .export import ExportJob, decode_audio, encoder_frame_rate, export, load_scores

__version__ = "0.1.0"
