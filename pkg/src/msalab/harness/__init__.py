"""Configuration, persistence and the command-line front end."""
