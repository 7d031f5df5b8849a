"""Experiment plugins, discovered at start-up by main.ExperimentRegistry."""
