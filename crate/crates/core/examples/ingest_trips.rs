//! Turns raw trip records into a demand profile for one time-of-day window.
//!
//! Run with `cargo run --example ingest_trips`.

use chrono::NaiveTime;
use evgrid::instance::{clusterize, location_map_from_trips, parse_trip_records, ClusterDefaults, DayWindow};

const TRIPS: &str = "pickup_datetime,dropoff_datetime,trip_distance,pulid,dolid,passenger_count
1/1/2019 08:10:00,1/1/2019 08:30:00,2.0,26,48,2
1/1/2019 09:15:00,1/1/2019 09:40:00,3.1,48,162,1
1/1/2019 10:05:00,1/1/2019 10:22:00,1.4,162,26,4
1/2/2019 08:05:00,1/2/2019 08:25:00,1.2,26,48,3
1/2/2019 10:00:00,1/2/2019 10:20:00,4.0,162,26,2
1/2/2019 17:30:00,1/2/2019 17:55:00,5.5,48,26,1
";

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let trips = parse_trip_records(TRIPS.as_bytes())?;
    let window = DayWindow::new(NaiveTime::from_hms_opt(8, 0, 0).unwrap(), NaiveTime::from_hms_opt(11, 0, 0).unwrap())?;
    let map = location_map_from_trips(&trips);
    let profile = clusterize(&trips, &window, &map, &ClusterDefaults::for_window(&window))?;

    println!("{} trips, {} locations, window {} min", trips.len(), profile.len(), window.minutes());
    println!("{:>8} {:>8} {:>8} {:>8}", "location", "pickup", "dropoff", "std");
    for (label, d) in profile.labels.iter().zip(&profile.nodes) {
        println!("{label:>8} {:>8.2} {:>8.2} {:>8.3}", d.mean_pickup, d.mean_dropoff, d.net_demand_std);
    }
    Ok(())
}
