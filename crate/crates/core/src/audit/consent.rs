use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ingest::Sessions;
use crate::model::{ConfigKey, Consent, Mechanism, Persona, Regime};
use crate::stats::{apply_bonferroni, effect_size, mann_whitney_u, EffectSize, UTestResult};

/// Opt-out against opt-in for one persona under one regime and mechanism.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsentRow {
    pub regime: Regime,
    pub mechanism: Mechanism,
    pub persona: Persona,
    pub n_opt_out: usize,
    pub n_opt_in: usize,
    /// `None` when either side has no bids.
    pub test: Option<UTestResult>,
    /// The reported p-value; Bonferroni-adjusted when the table asks for it.
    pub p: Option<f64>,
    pub effect: Option<EffectSize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsentTable {
    /// Persona-major, then regime, then mechanism.
    pub rows: Vec<ConsentRow>,
    pub bonferroni: bool,
    /// Number of tests actually run.
    pub comparisons: usize,
}

impl ConsentTable {
    pub fn get(
        &self,
        regime: Regime,
        mechanism: Mechanism,
        persona: Persona,
    ) -> Option<&ConsentRow> {
        self.rows
            .iter()
            .find(|r| r.regime == regime && r.mechanism == mechanism && r.persona == persona)
    }
}

/// Two-sided U test of opt-out against opt-in CPMs with its effect size.
/// `None` when either sample is empty.
pub fn compare_consent(opt_out: &[f64], opt_in: &[f64]) -> Option<(UTestResult, EffectSize)> {
    let test = mann_whitney_u(opt_out, opt_in).ok()?;
    Some((test, effect_size(&test, opt_out.len(), opt_in.len())))
}

/// Opt-out versus opt-in test for every category persona, regime and
/// mechanism. With `bonferroni`, p-values are scaled by the number of tests
/// run and effect sizes follow the adjusted p.
pub fn consent_table(sessions: &Sessions, bonferroni: bool) -> ConsentTable {
    let by_config = sessions.bids_by_config();
    let cpms = |regime, mechanism, consent, persona| -> Vec<f64> {
        let key = ConfigKey {
            regime,
            mechanism,
            consent,
            persona,
        };
        by_config
            .get(&key)
            .map(|bids| bids.iter().map(|b| b.cpm).collect())
            .unwrap_or_default()
    };
    let cells: Vec<(Persona, Regime, Mechanism)> = Persona::categories()
        .flat_map(|p| {
            Regime::ALL
                .iter()
                .flat_map(move |&r| Mechanism::ALL.iter().map(move |&m| (p, r, m)))
        })
        .collect();

    let mut rows: Vec<ConsentRow> = cells
        .par_iter()
        .map(|&(persona, regime, mechanism)| {
            let out = cpms(regime, mechanism, Consent::OptOut, persona);
            let inn = cpms(regime, mechanism, Consent::OptIn, persona);
            let compared = compare_consent(&out, &inn);
            ConsentRow {
                regime,
                mechanism,
                persona,
                n_opt_out: out.len(),
                n_opt_in: inn.len(),
                test: compared.map(|(t, _)| t),
                p: compared.map(|(t, _)| t.p),
                effect: compared.map(|(_, e)| e),
            }
        })
        .collect();

    let comparisons = rows.iter().filter(|r| r.test.is_some()).count();
    if bonferroni {
        for row in &mut rows {
            if let (Some(p), Some(effect)) = (row.p, row.effect) {
                let adjusted = apply_bonferroni(p, comparisons);
                row.p = Some(adjusted);
                row.effect = Some(EffectSize::from_p_and_r(adjusted, effect.r));
            }
        }
    }
    ConsentTable {
        rows,
        bonferroni,
        comparisons,
    }
}
