"""Simulator for backdoor attacks and defenses in personalized peer-to-peer federated learning."""

__version__ = "0.1.0"
