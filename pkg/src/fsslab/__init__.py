"""Facial-sketch synthesis lab: dataset, two-stage GAN pipeline, evaluation."""

__version__ = "0.1.0"
