import numpy as np
import pytest
from pydantic import ValidationError

from grpcoll.core.config import Settings, parse_bind
from grpcoll.core.errors import GrpCollError, NotReadyError, ProtocolError, RemoteError
from grpcoll.core.seeding import make_rng, spawn_seeds


def test_parse_bind():
    assert parse_bind("0.0.0.0:7461") == ("0.0.0.0", 7461)
    assert parse_bind(":9000") == ("127.0.0.1", 9000)
    with pytest.raises(ValueError):
        parse_bind("localhost")
    with pytest.raises(ValueError):
        parse_bind("host:http")


def test_settings_validation(monkeypatch):
    monkeypatch.setenv("TIMEOUT_SECS", "2.5")
    monkeypatch.setenv("LOG_LEVEL", "debug")
    settings = Settings()
    assert settings.TIMEOUT_SECS == 2.5
    assert settings.LOG_LEVEL == "DEBUG"
    monkeypatch.setenv("CHUNK_SIZE", "0")
    with pytest.raises(ValidationError):
        Settings()
    monkeypatch.setenv("CHUNK_SIZE", "256")
    monkeypatch.setenv("COORDINATOR_BIND", "nowhere")
    with pytest.raises(ValidationError):
        Settings()


def test_spawned_seeds_are_stable_prefixes():
    assert spawn_seeds(7, 1)[0] == spawn_seeds(7, 5)[0]
    assert spawn_seeds(7, 3) == spawn_seeds(7, 10)[:3]
    assert len(set(spawn_seeds(7, 100))) == 100
    assert spawn_seeds(7, 1) != spawn_seeds(8, 1)


def test_make_rng_is_reproducible():
    assert np.array_equal(make_rng(3).standard_normal(5), make_rng(3).standard_normal(5))


def test_error_codes():
    assert issubclass(NotReadyError, ProtocolError)
    codes = {cls.code for cls in GrpCollError.__subclasses__()}
    assert len(codes) == len(GrpCollError.__subclasses__())
    remote = RemoteError(53, "model is not trained yet")
    assert remote.remote_code == 53
    assert "53" in str(remote)
