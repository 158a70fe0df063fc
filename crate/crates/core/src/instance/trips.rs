//! Raw trip records and their aggregation into nodal demand.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};

use chrono::{NaiveDate, NaiveDateTime, NaiveTime};

use super::{DemandProfile, InstanceError, NodeDemand};

pub const TRIP_HEADER: [&str; 6] =
    ["pickup_datetime", "dropoff_datetime", "trip_distance", "pulid", "dolid", "passenger_count"];

const TIMESTAMP_FMT: &str = "%m/%d/%Y %H:%M:%S";

#[derive(Clone, Debug, PartialEq)]
pub struct TripRecord {
    pub pickup_datetime: NaiveDateTime,
    pub dropoff_datetime: NaiveDateTime,
    /// Miles.
    pub trip_distance: f64,
    pub pickup_location_id: u32,
    pub dropoff_location_id: u32,
    pub passenger_count: u32,
}

fn field_err(line: u64, field: &str, message: impl Into<String>) -> InstanceError {
    InstanceError::Parse { line, field: field.to_string(), message: message.into() }
}

/// Reads trips from CSV with the [`TRIP_HEADER`] columns. `line` in
/// diagnostics is the 1-based line in the file, header included.
pub fn parse_trip_records<R: Read>(reader: R) -> Result<Vec<TripRecord>, InstanceError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .has_headers(true)
        .from_reader(reader);
    let header = rdr.headers().map_err(|e| field_err(1, "header", e.to_string()))?.clone();
    let names: Vec<String> = header.iter().map(str::to_ascii_lowercase).collect();
    if let Some(bad) = names.iter().find(|n| !TRIP_HEADER.contains(&n.as_str())) {
        return Err(field_err(1, bad, "unknown column"));
    }
    let mut col = [0usize; 6];
    for (k, want) in TRIP_HEADER.iter().enumerate() {
        col[k] = names
            .iter()
            .position(|n| n == want)
            .ok_or_else(|| field_err(1, want, "missing column"))?;
    }

    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            field_err(line, "row", e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        let get = |k: usize| rec.get(col[k]).unwrap_or("");
        let ts = |k: usize| {
            NaiveDateTime::parse_from_str(get(k), TIMESTAMP_FMT)
                .map_err(|e| field_err(line, TRIP_HEADER[k], format!("{:?}: {e}", get(k))))
        };
        let pickup = ts(0)?;
        let dropoff = ts(1)?;
        let distance: f64 = get(2)
            .parse()
            .map_err(|_| field_err(line, TRIP_HEADER[2], format!("not a number: {:?}", get(2))))?;
        let id = |k: usize| {
            get(k)
                .parse::<u32>()
                .map_err(|_| field_err(line, TRIP_HEADER[k], format!("not a location id: {:?}", get(k))))
        };
        let pulid = id(3)?;
        let dolid = id(4)?;
        let passengers: i64 = get(5)
            .parse()
            .map_err(|_| field_err(line, TRIP_HEADER[5], format!("not an integer: {:?}", get(5))))?;
        if passengers < 1 {
            return Err(field_err(line, TRIP_HEADER[5], format!("must be at least 1, got {passengers}")));
        }
        if !(distance >= 0.0 && distance.is_finite()) {
            return Err(field_err(line, TRIP_HEADER[2], format!("must be nonnegative, got {distance}")));
        }
        if dropoff < pickup {
            return Err(field_err(line, TRIP_HEADER[1], "dropoff precedes pickup"));
        }
        out.push(TripRecord {
            pickup_datetime: pickup,
            dropoff_datetime: dropoff,
            trip_distance: distance,
            pickup_location_id: pulid,
            dropoff_location_id: dolid,
            passenger_count: u32::try_from(passengers)
                .map_err(|_| field_err(line, TRIP_HEADER[5], "too large"))?,
        });
    }
    Ok(out)
}

/// Writes trips in the format accepted by [`parse_trip_records`].
pub fn write_trip_records<W: Write>(trips: &[TripRecord], w: W) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(TRIP_HEADER)?;
    for t in trips {
        out.write_record([
            t.pickup_datetime.format(TIMESTAMP_FMT).to_string(),
            t.dropoff_datetime.format(TIMESTAMP_FMT).to_string(),
            format!("{}", t.trip_distance),
            t.pickup_location_id.to_string(),
            t.dropoff_location_id.to_string(),
            t.passenger_count.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Time-of-day interval `[start, end)` applied to every calendar day.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DayWindow {
    pub start: NaiveTime,
    pub end: NaiveTime,
}

impl DayWindow {
    pub fn new(start: NaiveTime, end: NaiveTime) -> Result<Self, InstanceError> {
        if start >= end {
            return Err(InstanceError::Invalid(format!("empty window {start}..{end}")));
        }
        Ok(DayWindow { start, end })
    }

    pub fn whole_day() -> Self {
        DayWindow {
            start: NaiveTime::MIN,
            end: NaiveTime::from_hms_nano_opt(23, 59, 59, 999_999_999).expect("valid time"),
        }
    }

    pub fn contains(&self, t: NaiveDateTime) -> bool {
        let tod = t.time();
        tod >= self.start && tod < self.end
    }

    pub fn minutes(&self) -> f64 {
        (self.end - self.start).num_milliseconds() as f64 / 60_000.0
    }
}

/// Defaults applied to every clusterized node.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClusterDefaults {
    pub risk_tolerance: f64,
    pub earliest_arrival: f64,
    pub latest_arrival: f64,
}

impl ClusterDefaults {
    pub fn for_window(window: &DayWindow) -> Self {
        ClusterDefaults { risk_tolerance: 0.05, earliest_arrival: 0.0, latest_arrival: window.minutes() }
    }
}

fn mean_std(samples: &[f64]) -> (f64, f64) {
    let n = samples.len();
    if n == 0 {
        return (0.0, 0.0);
    }
    let mean = samples.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let ss: f64 = samples.iter().map(|x| (x - mean) * (x - mean)).sum();
    (mean, (ss / (n - 1) as f64).sqrt())
}

/// Aggregates trips into per-node means and net-demand dispersion.
///
/// `location_map` sends location ids to customer indices `1..=n`, where `n`
/// is the largest mapped index. Pickups count at the pickup location when
/// the pickup time falls in the window, dropoffs likewise. The sample runs
/// over every calendar day on which some in-window event occurred.
pub fn clusterize(
    trips: &[TripRecord],
    window: &DayWindow,
    location_map: &BTreeMap<u32, usize>,
    defaults: &ClusterDefaults,
) -> Result<DemandProfile, InstanceError> {
    let unmapped: BTreeSet<u32> = trips
        .iter()
        .flat_map(|t| [t.pickup_location_id, t.dropoff_location_id])
        .filter(|id| !location_map.contains_key(id))
        .collect();
    if !unmapped.is_empty() {
        return Err(InstanceError::UnmappedLocations(unmapped.into_iter().collect()));
    }
    if location_map.values().any(|&j| j == 0) {
        return Err(InstanceError::Invalid("location mapped to the depot index 0".into()));
    }
    let n = location_map.values().copied().max().unwrap_or(0);

    // (day, node) -> (pickups, dropoffs); integer counts keep this order-free.
    let mut counts: BTreeMap<(NaiveDate, usize), (u64, u64)> = BTreeMap::new();
    let mut days = BTreeSet::new();
    for t in trips {
        if window.contains(t.pickup_datetime) {
            let day = t.pickup_datetime.date();
            days.insert(day);
            counts.entry((day, location_map[&t.pickup_location_id])).or_default().0 +=
                u64::from(t.passenger_count);
        }
        if window.contains(t.dropoff_datetime) {
            let day = t.dropoff_datetime.date();
            days.insert(day);
            counts.entry((day, location_map[&t.dropoff_location_id])).or_default().1 +=
                u64::from(t.passenger_count);
        }
    }

    let mut labels = vec![Vec::new(); n];
    for (&id, &j) in location_map {
        labels[j - 1].push(id.to_string());
    }
    let mut nodes = Vec::with_capacity(n);
    for j in 1..=n {
        let mut pick = Vec::with_capacity(days.len());
        let mut drop = Vec::with_capacity(days.len());
        let mut net = Vec::with_capacity(days.len());
        for &d in &days {
            let (p, q) = counts.get(&(d, j)).copied().unwrap_or_default();
            pick.push(p as f64);
            drop.push(q as f64);
            net.push(q as f64 - p as f64);
        }
        nodes.push(NodeDemand {
            mean_dropoff: mean_std(&drop).0,
            mean_pickup: mean_std(&pick).0,
            net_demand_std: mean_std(&net).1,
            risk_tolerance: defaults.risk_tolerance,
            earliest_arrival: defaults.earliest_arrival,
            latest_arrival: defaults.latest_arrival,
        });
    }
    let labels = labels.into_iter().map(|l| l.join("+")).collect();
    let profile = DemandProfile { labels, nodes };
    profile.validate()?;
    Ok(profile)
}

/// Maps every location id appearing in `trips` to consecutive customer
/// indices in ascending id order.
pub fn location_map_from_trips(trips: &[TripRecord]) -> BTreeMap<u32, usize> {
    let ids: BTreeSet<u32> =
        trips.iter().flat_map(|t| [t.pickup_location_id, t.dropoff_location_id]).collect();
    ids.into_iter().enumerate().map(|(k, id)| (id, k + 1)).collect()
}
