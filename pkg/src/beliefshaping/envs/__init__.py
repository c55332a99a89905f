"""Hidden-role environments behind one stepping interface."""

from .avalon import AvalonEnv
from .base import EnvSpec, HiddenRoleEnv, Transition, play_episode
from .coingame import CoinGameEnv

ENV_NAMES = ("avalon5", "avalon5_blind", "coingame")


def make_env(name: str) -> HiddenRoleEnv:
    if name == "avalon5":
        return AvalonEnv(blind=False)
    if name == "avalon5_blind":
        return AvalonEnv(blind=True)
    if name == "coingame":
        return CoinGameEnv()
    raise ValueError(f"unknown environment {name!r}; choose from {ENV_NAMES}")


__all__ = [
    "AvalonEnv",
    "CoinGameEnv",
    "EnvSpec",
    "ENV_NAMES",
    "HiddenRoleEnv",
    "Transition",
    "make_env",
    "play_episode",
]
