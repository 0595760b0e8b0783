import numpy as np
import pytest

from amopt import data
from amopt.binomial import price_many
from amopt.errors import ParameterError
from amopt.synthetic import SyntheticConfig, generate_quotes, generate_underlying, write_market


def test_deterministic_limit():
    s = generate_underlying(SyntheticConfig(sigma=1e-12, drift=0.0, trading_days=300))
    np.testing.assert_allclose(s, 100.0, atol=1e-6)


def test_same_seed_same_series():
    a = generate_underlying(SyntheticConfig(seed=4))
    b = generate_underlying(SyntheticConfig(seed=4))
    c = generate_underlying(SyntheticConfig(seed=5))
    assert np.array_equal(a, b) and not np.array_equal(a, c)
    assert np.all(a > 0)


def test_log_return_volatility():
    cfg = SyntheticConfig(trading_days=10_001, sigma=0.3)
    r = np.diff(np.log(generate_underlying(cfg)))
    assert abs(r.std(ddof=1) - 0.3 / np.sqrt(252)) < 0.1 * 0.3 / np.sqrt(252)


def test_zero_spread_mid_is_tree_price():
    cfg = SyntheticConfig(trading_days=5, half_spread=0.0)
    m = generate_quotes(cfg)
    mids = np.array([(q.bid + q.ask) / 2 for q in m.quotes])
    np.testing.assert_array_equal(mids, m.tree_prices)
    rec = data.enrich(m.quotes, m.rates, {k: v * 0.01 for k, v in m.vols.items()})
    again = price_many([r.spot for r in rec], [r.strike for r in rec], [r.interest_rate for r in rec],
                       [r.volatility for r in rec], [r.days_to_maturity for r in rec])
    np.testing.assert_array_equal(again, mids)


def test_quotes_are_valid():
    m = generate_quotes(SyntheticConfig(trading_days=5, half_spread=0.2))
    assert all(q.ask >= q.bid >= 0 for q in m.quotes)
    assert all(q.expiration_date > q.quote_date for q in m.quotes)


def test_deep_itm_above_intrinsic():
    cfg = SyntheticConfig(trading_days=3, strike_grid=(-0.5,), half_spread=0.0)
    m = generate_quotes(cfg)
    assert m.quotes
    for q in m.quotes:
        assert (q.bid + q.ask) / 2 >= q.spot - q.strike


def test_tables_cover_every_date(tmp_path):
    m = generate_quotes(SyntheticConfig(trading_days=4))
    paths = write_market(m, tmp_path)
    rates = data.load_rate_table(paths["rates"])
    assert len(rates) == 4 * 5
    quotes, rejects = data.ingest_csv(paths["quotes"])
    assert len(quotes) == len(m.quotes) and not rejects
    data.enrich(quotes, rates, data.load_vol_table(paths["vols"]))


def test_config_validation():
    with pytest.raises(ParameterError, match="sigma"):
        SyntheticConfig(sigma=0.0)
    with pytest.raises(ParameterError, match="half_spread"):
        SyntheticConfig(half_spread=-1)
    with pytest.raises(ParameterError):
        SyntheticConfig(strike_grid=())
