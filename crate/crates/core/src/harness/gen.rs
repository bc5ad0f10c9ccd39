use serde::{Deserialize, Serialize};

use crate::datagen::{
    gen_drifting_stream, gen_ground_truth, gen_periodic_traffic_with, gen_stream, traffic_to_csv,
    PeriodicTrafficConfig, Streams, SyntheticConfig,
};
use crate::error::{Error, Result};

/// What `gen-data` materializes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DataRequest {
    PeriodicTraffic(PeriodicTrafficConfig),
    Synthetic {
        #[serde(flatten)]
        config: SyntheticConfig,
        horizon: usize,
        switch_at: Option<usize>,
    },
}

/// `agent,t,k0..,v0..`, time-major.
pub fn streams_to_csv(streams: &Streams) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let em = |e: csv::Error| Error::Emission(e.to_string());
    let mut header = vec!["agent".to_string(), "t".to_string()];
    header.extend((0..streams.key_dim()).map(|i| format!("k{i}")));
    header.extend((0..streams.value_dim()).map(|i| format!("v{i}")));
    w.write_record(&header).map_err(em)?;
    for t in 1..=streams.horizon() {
        for n in 0..streams.n_agents() {
            let kv = streams.sample(n, t)?;
            let mut rec = vec![n.to_string(), t.to_string()];
            rec.extend(kv.key.iter().map(f64::to_string));
            rec.extend(kv.value.iter().map(f64::to_string));
            w.write_record(&rec).map_err(em)?;
        }
    }
    let bytes = w.into_inner().map_err(|e| Error::Emission(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Emission(e.to_string()))
}

pub fn gen_data(req: &DataRequest) -> Result<String> {
    match req {
        DataRequest::PeriodicTraffic(cfg) => Ok(traffic_to_csv(&gen_periodic_traffic_with(cfg)?)),
        DataRequest::Synthetic {
            config,
            horizon,
            switch_at,
        } => {
            let gt = gen_ground_truth(config)?;
            let s = match switch_at {
                Some(at) => gen_drifting_stream(config, &gt, *horizon, *at)?,
                None => gen_stream(config, &gt, *horizon)?,
            };
            streams_to_csv(&s)
        }
    }
}
