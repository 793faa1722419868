use std::collections::{BTreeMap, BTreeSet};

use percent_encoding::{utf8_percent_encode, NON_ALPHANUMERIC};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};
use rayon::prelude::*;

use super::rng::stream;
use super::truth::{GroundTruth, KnowledgeEdge, KnowledgeHolders, PlantedFlow};
use super::{Profile, SimConfig, SimError};
use crate::audit::LeakedSet;
use crate::ingest::registrable_domain;
use crate::model::{
    BidRecord, ConfigKey, Consent, HttpEvent, Iteration, Mechanism, NameValue, Persona, Regime,
    SessionKey,
};
use crate::sync::{Channel, Encoding};

/// Logs and labels of one simulated run.
#[derive(Debug, Clone, PartialEq)]
pub struct SimOutput {
    pub bids: Vec<BidRecord>,
    pub events: Vec<HttpEvent>,
    pub truth: GroundTruth,
    pub leaked: LeakedSet,
}

/// 2021-01-01T00:00:00Z
const EPOCH_MS: i64 = 1_609_459_200_000;

struct Site {
    domain: String,
    advertisers: Vec<usize>,
}

struct Edge {
    to: usize,
    encoding: Encoding,
    channel: Channel,
}

struct World<'a> {
    config: &'a SimConfig,
    /// Registrable domain of each advertiser.
    parties: Vec<String>,
    edges: Vec<Vec<Edge>>,
    sites: BTreeMap<(Regime, Mechanism), Vec<Site>>,
    leaked: BTreeMap<Persona, BTreeSet<usize>>,
}

#[derive(Default)]
struct Track {
    bids: Vec<BidRecord>,
    events: Vec<HttpEvent>,
    planted: Vec<PlantedFlow>,
    edges: Vec<KnowledgeEdge>,
    holders: BTreeSet<String>,
}

/// Run both phases of the protocol.
///
/// Persona building decides which advertisers see each persona's interests.
/// Measurement then visits every publisher site once per iteration for each
/// regime, mechanism, persona and consent state, emitting bids and HTTP
/// traffic. The opt-out or opt-in registration visit that precedes the
/// iterations is implied and produces no records.
pub fn simulate(config: &SimConfig) -> Result<SimOutput, SimError> {
    config.validate()?;
    let world = build_world(config);

    let mut tracks: Vec<ConfigKey> = Vec::new();
    for &regime in &config.regimes {
        for &mechanism in &config.mechanisms {
            for &consent in Consent::ALL {
                for spec in &config.personas {
                    tracks.push(ConfigKey {
                        regime,
                        mechanism,
                        consent,
                        persona: spec.category,
                    });
                }
            }
        }
    }
    tracks.sort();
    let results: Vec<(ConfigKey, Track)> = tracks
        .par_iter()
        .map(|&key| (key, run_track(&world, key)))
        .collect();

    let mut out_bids = Vec::new();
    let mut out_events = Vec::new();
    let mut planted = Vec::new();
    let mut knowledge_edges = Vec::new();
    let mut holders = Vec::new();
    for (config_key, track) in results {
        out_bids.extend(track.bids);
        out_events.extend(track.events);
        planted.extend(track.planted);
        knowledge_edges.extend(track.edges);
        holders.push(KnowledgeHolders {
            config: config_key,
            advertisers: track.holders,
        });
    }

    let run_id = config.run_id();
    let mut leaked = LeakedSet {
        run_id: Some(run_id.clone()),
        leaked: BTreeMap::new(),
    };
    for spec in &config.personas {
        let set = world.leaked.get(&spec.category).into_iter().flatten();
        leaked.leaked.insert(
            spec.category,
            set.map(|&a| config.advertisers[a].identity.clone())
                .collect(),
        );
    }
    let truth = GroundTruth {
        run_id,
        seed: config.seed,
        profiles: config
            .advertisers
            .iter()
            .map(|a| (a.identity.clone(), a.profile))
            .collect(),
        leaked: leaked.clone(),
        knowledge_edges,
        holders,
        planted,
    };
    Ok(SimOutput {
        bids: out_bids,
        events: out_events,
        truth,
        leaked,
    })
}

fn build_world(config: &SimConfig) -> World<'_> {
    let seed = config.seed;
    let index: BTreeMap<&str, usize> = config
        .advertisers
        .iter()
        .enumerate()
        .map(|(i, a)| (a.identity.as_str(), i))
        .collect();
    let parties = config
        .advertisers
        .iter()
        .map(|a| registrable_domain(&a.identity))
        .collect();

    let edges = config
        .advertisers
        .iter()
        .map(|a| {
            a.partners
                .iter()
                .map(|p| {
                    let mut rng = stream(seed, &["edge", &a.identity, &p.to]);
                    let drawn_encoding = Encoding::ALL[rng.gen_range(0..Encoding::ALL.len())];
                    let channels = [
                        Channel::UrlComponent,
                        Channel::Header,
                        Channel::RedirectChain,
                    ];
                    let drawn_channel = channels[rng.gen_range(0..channels.len())];
                    Edge {
                        to: index[p.to.as_str()],
                        encoding: p.encoding.unwrap_or(drawn_encoding),
                        channel: p.channel.unwrap_or(drawn_channel),
                    }
                })
                .collect()
        })
        .collect();

    let mut sites = BTreeMap::new();
    for &regime in &config.regimes {
        for &mechanism in &config.mechanisms {
            let list = (0..config.measurement_sites)
                .map(|k| {
                    let mut rng = stream(
                        seed,
                        &["site", regime.as_str(), mechanism.as_str(), &k.to_string()],
                    );
                    let mut advertisers = rand::seq::index::sample(
                        &mut rng,
                        config.advertisers.len(),
                        config.advertisers_per_site,
                    )
                    .into_vec();
                    advertisers.sort_unstable();
                    Site {
                        domain: format!(
                            "pub{k}-{}-{}.com",
                            mechanism.as_str().to_ascii_lowercase(),
                            regime.as_str().to_ascii_lowercase()
                        ),
                        advertisers,
                    }
                })
                .collect();
            sites.insert((regime, mechanism), list);
        }
    }

    // Persona building: an advertiser that operates in the category and sits
    // on at least one of the visited category sites sees the interest.
    let mut leaked = BTreeMap::new();
    for spec in config.personas.iter().filter(|s| !s.category.is_control()) {
        let visited = spec.sites_visited.unwrap_or(config.sites_per_persona);
        let set: BTreeSet<usize> = config
            .advertisers
            .iter()
            .enumerate()
            .filter(|(_, a)| {
                let mut rng = stream(seed, &["build", spec.category.as_str(), &a.identity]);
                let operates = rng.gen_bool(a.reach);
                let present =
                    (0..visited).fold(false, |acc, _| rng.gen_bool(config.site_presence) || acc);
                operates && present
            })
            .map(|(i, _)| i)
            .collect();
        leaked.insert(spec.category, set);
    }

    World {
        config,
        parties,
        edges,
        sites,
        leaked,
    }
}

fn track_label(key: ConfigKey) -> String {
    format!(
        "{}-{}-{}-{}",
        key.regime, key.mechanism, key.persona, key.consent
    )
    .to_ascii_lowercase()
}

fn encode_for_url(token: &str) -> String {
    utf8_percent_encode(token, NON_ALPHANUMERIC).to_string()
}

fn run_track(world: &World, key: ConfigKey) -> Track {
    let config = world.config;
    let seed = config.seed;
    let label = track_label(key);
    let is_control = key.persona.is_control();
    let mut knows: BTreeSet<usize> = world.leaked.get(&key.persona).cloned().unwrap_or_default();
    let uses_knowledge = |a: usize, knows: &BTreeSet<usize>| {
        !is_control
            && knows.contains(&a)
            && (key.consent == Consent::OptIn || !config.advertisers[a].profile.is_compliant())
    };
    // Whether the advertiser syncs at all, and whether it may pass on what
    // it knows, under this consent state.
    let syncs = |a: usize| {
        config.advertisers[a].profile == Profile::NonCompliantSharer
            || key.consent == Consent::OptIn
    };

    let uids: Vec<String> = config
        .advertisers
        .iter()
        .map(|a| {
            let mut rng = stream(seed, &["uid", &label, &a.identity]);
            format!("{:032x}", rng.gen::<u128>())
        })
        .collect();
    let distributions: Vec<LogNormal<f64>> = config
        .advertisers
        .iter()
        .map(|a| LogNormal::new(a.base_mu, a.base_sigma).expect("validated parameters"))
        .collect();

    let sites = &world.sites[&(key.regime, key.mechanism)];
    let mut out = Track::default();
    let mut contacted = vec![false; config.advertisers.len()];
    let mut wait_rng = stream(seed, &["wait", &label]);
    let mut ts = EPOCH_MS;
    let mut counter = 0usize;
    let mut next_id = || {
        counter += 1;
        format!("{label}-{counter:05}")
    };

    for it in 1..=config.iterations {
        let iteration = Iteration::new(it).expect("validated iteration count");
        let session = SessionKey {
            persona: key.persona,
            regime: key.regime,
            mechanism: key.mechanism,
            consent: key.consent,
            iteration,
        };
        let mut cpm_rngs: BTreeMap<usize, ChaCha8Rng> = BTreeMap::new();
        let mut gained: Vec<(usize, usize)> = Vec::new();

        for (s, site) in sites.iter().enumerate() {
            ts += wait_rng.gen_range(10_000..=30_000);
            let page_url = format!("https://{}/", site.domain);
            out.events.push(HttpEvent {
                event_id: next_id(),
                session,
                url: page_url.clone(),
                party: site.domain.clone(),
                request_headers: vec![NameValue::new("Accept", "text/html")],
                response_headers: vec![NameValue::new("Content-Type", "text/html")],
                cookies_sent: vec![],
                cookies_set: vec![],
                referrer: None,
                redirect_from: None,
            });

            for &a in &site.advertisers {
                let identity = &config.advertisers[a].identity;
                let cookie = vec![NameValue::new("uid", uids[a].clone())];
                let (sent, set) = if contacted[a] {
                    (cookie, vec![])
                } else {
                    contacted[a] = true;
                    (vec![], cookie)
                };
                out.events.push(HttpEvent {
                    event_id: next_id(),
                    session,
                    url: format!("https://ads.{identity}/hb?site={}&slot=1", site.domain),
                    party: world.parties[a].clone(),
                    request_headers: vec![NameValue::new("Accept", "*/*")],
                    response_headers: vec![NameValue::new("Content-Type", "application/json")],
                    cookies_sent: sent,
                    cookies_set: set,
                    referrer: Some(page_url.clone()),
                    redirect_from: None,
                });
            }

            let mut pick = stream(seed, &["bids", &label, &it.to_string(), &s.to_string()]);
            for b in 0..config.bids_per_visit {
                let a = site.advertisers[pick.gen_range(0..site.advertisers.len())];
                let rng = cpm_rngs.entry(a).or_insert_with(|| {
                    stream(
                        seed,
                        &[
                            "cpm",
                            &label,
                            &config.advertisers[a].identity,
                            &it.to_string(),
                        ],
                    )
                });
                let mut cpm = distributions[a].sample(rng);
                if uses_knowledge(a, &knows) {
                    cpm *= config.advertisers[a].uplift;
                }
                out.bids.push(BidRecord {
                    persona: key.persona,
                    site: site.domain.clone(),
                    advertiser: config.advertisers[a].identity.clone(),
                    cpm,
                    regime: key.regime,
                    mechanism: key.mechanism,
                    consent: key.consent,
                    iteration,
                    timestamp: ts + b as i64,
                });
            }

            for &a in &site.advertisers {
                if !syncs(a) {
                    continue;
                }
                let from = &config.advertisers[a].identity;
                for edge in &world.edges[a] {
                    let to = &config.advertisers[edge.to].identity;
                    let token = edge.encoding.apply(&uids[a]);
                    let mut flow_event = HttpEvent {
                        event_id: String::new(),
                        session,
                        url: String::new(),
                        party: world.parties[edge.to].clone(),
                        request_headers: vec![NameValue::new("Accept", "image/*")],
                        response_headers: vec![],
                        cookies_sent: vec![],
                        cookies_set: vec![],
                        referrer: Some(page_url.clone()),
                        redirect_from: None,
                    };
                    match edge.channel {
                        Channel::UrlComponent => {
                            flow_event.url = format!(
                                "https://sync.{to}/match?partner={from}&puid={}",
                                encode_for_url(&token)
                            );
                        }
                        Channel::Header => {
                            flow_event.url = format!("https://sync.{to}/match?partner={from}");
                            flow_event
                                .request_headers
                                .push(NameValue::new("X-Partner-Uid", token.clone()));
                        }
                        Channel::RedirectChain => {
                            let hop = next_id();
                            out.events.push(HttpEvent {
                                event_id: hop.clone(),
                                session,
                                url: format!("https://sync.{from}/redirect?dest={to}"),
                                party: world.parties[a].clone(),
                                request_headers: vec![NameValue::new("Accept", "image/*")],
                                response_headers: vec![NameValue::new(
                                    "Location",
                                    format!("https://sync.{to}/match"),
                                )],
                                cookies_sent: vec![NameValue::new("uid", uids[a].clone())],
                                cookies_set: vec![],
                                referrer: Some(page_url.clone()),
                                redirect_from: None,
                            });
                            flow_event.url =
                                format!("https://sync.{to}/match?puid={}", encode_for_url(&token));
                            flow_event.redirect_from = Some(hop);
                        }
                    }
                    flow_event.event_id = next_id();
                    out.planted.push(PlantedFlow {
                        event_id: flow_event.event_id.clone(),
                        session,
                        sender: world.parties[a].clone(),
                        receiver: world.parties[edge.to].clone(),
                        value: uids[a].clone(),
                        encoding: edge.encoding,
                        channel: edge.channel,
                    });
                    out.events.push(flow_event);
                    if !is_control && knows.contains(&a) {
                        gained.push((a, edge.to));
                    }
                }
            }
        }

        // one hop per visit: what was forwarded now is bid on next visit
        for (from, to) in gained {
            if knows.insert(to) {
                out.edges.push(KnowledgeEdge {
                    config: key,
                    iteration,
                    from: config.advertisers[from].identity.clone(),
                    to: config.advertisers[to].identity.clone(),
                });
            }
        }
    }
    out.holders = knows
        .into_iter()
        .map(|a| config.advertisers[a].identity.clone())
        .collect();
    out
}
