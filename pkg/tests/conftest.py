import io

import pytest

from cellqos.data_model import CELL_COLUMNS, CellRecord, DuplexMode

BASE_ROW = {
    "cell_name": "S1_C1",
    "site_id": "S1",
    "operator": "opA",
    "city": "cityX",
    "longitude": "29.0",
    "latitude": "41.0",
    "azimuth": "120",
    "height": "30",
    "duplex_mode": "TDD",
    "dl_narfcn": "630000",
    "frequency_band": "n78",
    "dl_bandwidth": "100",
    "txrx_mode": "4T4R",
    "subframe_assignment": "DDDSU",
    "special_patterns": "10:2:2",
    "dl_prb_avail": "273",
    "dl_prb_usage": "50",
    "ul_prb_avail": "273",
    "online_users": "40",
    "dl_concurrent_users": "4",
    "ul_concurrent_users": "2",
    "dl_traffic": "1000",
    "ul_traffic": "100",
    "total_traffic": "1100",
}


def make_row(**overrides):
    row = dict(BASE_ROW)
    row.update({k: str(v) for k, v in overrides.items()})
    return row


def rows_to_csv(rows, columns=CELL_COLUMNS):
    buf = io.StringIO()
    buf.write(",".join(columns) + "\n")
    for r in rows:
        buf.write(",".join(r[c] for c in columns) + "\n")
    return buf.getvalue()


def make_record(**overrides) -> CellRecord:
    values = {
        "cell_name": "S1_C1", "site_id": "S1", "operator": "opA", "city": "cityX",
        "longitude": 29.0, "latitude": 41.0, "azimuth": 0.0, "height": 30.0,
        "duplex_mode": DuplexMode.TDD, "dl_narfcn": 630000, "frequency_band": "n78",
        "dl_bandwidth": 100.0, "txrx_mode": "4T4R", "subframe_assignment": "DDDSU",
        "special_patterns": "10:2:2", "dl_prb_avail": 273.0, "dl_prb_usage": 50.0,
        "ul_prb_avail": 273.0, "online_users": 40.0, "dl_concurrent_users": 4.0,
        "ul_concurrent_users": 2.0, "dl_traffic": 1000.0, "ul_traffic": 100.0, "total_traffic": 1100.0,
    }
    values.update(overrides)
    return CellRecord(**values)


@pytest.fixture
def record_factory():
    return make_record
