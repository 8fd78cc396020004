"""VistaNet: bleeding-frame classification ensemble with segmentation explanations and Soft-NMS."""
