use std::sync::Mutex;

use proptest::prelude::*;

use super::*;
use crate::catalog::Product;
use crate::persona::{
    BuyerIntent, ExplorationRegime, PriceTier, ProductPreferences, PURCHASE_DECISION_GUIDE,
};
use crate::storefront::{ActionKind, Collection, VariantParams};
use crate::synthetic::adversarial_store;

fn product(r: &str, name: &str, category: &str, price: f64, q: f64, keywords: &[&str]) -> Product {
    Product {
        product_ref: r.into(),
        name: name.into(),
        price,
        category: category.into(),
        keywords: keywords.iter().map(|k| k.to_string()).collect(),
        quality_score: q,
    }
}

fn store(trust: f64, image: f64) -> StoreSpec {
    let products = vec![
        product("cheap-mug", "Plain Mug", "mugs", 5.0, 0.1, &[]),
        product("fine-mug", "Artisan Mug", "mugs", 60.0, 0.95, &["handcrafted"]),
        product("mid-mug", "Diner Mug", "mugs", 30.0, 0.6, &[]),
        product("desk-lamp", "Desk Lamp", "lamps", 40.0, 0.5, &[]),
    ];
    StoreSpec {
        shop_id: "shop".into(),
        name: "Shop".into(),
        collections: vec![
            Collection {
                name: "mugs".into(),
                product_refs: vec!["cheap-mug".into(), "fine-mug".into(), "mid-mug".into()],
            },
            Collection {
                name: "lamps".into(),
                product_refs: vec!["desk-lamp".into()],
            },
        ],
        products,
        search_enabled: true,
        variant_params: VariantParams {
            featured_products: vec!["desk-lamp".into(), "mid-mug".into()],
            layout_density: 0.5,
            trust_cue_level: trust,
            image_quality: image,
            nav_depth: 1,
        },
    }
}

fn archetype(tier: PriceTier, regime: ExplorationRegime) -> BuyerArchetype {
    BuyerArchetype {
        cluster_id: 0,
        buyer_id: "b1".into(),
        price_tier: tier,
        price_gap: 0.0,
        exploration_score: 0.5,
        exploration_regime: regime,
        premium_focus: 0.8,
        performance_focus: 0.1,
        ethics_focus: 0.1,
        rationale: "fixture".into(),
    }
}

fn persona(id: &str, cluster: usize, mass: usize, target: &str, a: BuyerArchetype) -> Persona {
    let intent = BuyerIntent {
        cluster_id: cluster,
        product_target: target.into(),
        purchase_decision_guide: PURCHASE_DECISION_GUIDE.into(),
    };
    let prefs = ProductPreferences {
        cluster_id: cluster,
        categories: vec![target.into()],
        individual_products: vec![],
        reasoning: String::new(),
    };
    crate::persona::compose_prompt(id, "shop", mass, intent, BuyerArchetype { cluster_id: cluster, ..a }, prefs)
        .unwrap()
}

fn profile(target: &str, tier: PriceTier, regime: ExplorationRegime) -> AgentProfile {
    AgentProfile::from_persona(&persona("p1", 0, 10, target, archetype(tier, regime)), PersonaMode::FullPersona)
}

fn observe(spec: &StoreSpec, page: PageState, step: usize) -> ObservationRecord {
    let state = BrowserState {
        page,
        ..BrowserState::start()
    };
    ObservationRecord {
        url: state.page.url.clone(),
        ax_tree: render_ax_tree(spec, &state).unwrap(),
        image_payload: None,
        step_index: step,
    }
}

fn entry(step: usize, url: &str, action: Action) -> MemoryEntry {
    MemoryEntry {
        step_index: step,
        observation_digest: ObservationDigest {
            url: url.into(),
            page_kind: PageState::route(url).map(|p| p.kind),
            title: String::new(),
            elements: vec![],
        },
        reasoning: String::new(),
        action,
        outcome: Outcome::Ok,
        emitted_events: vec![],
        error_detail: None,
    }
}

fn params<'a>(profile: &'a AgentProfile, spec: &'a StoreSpec, g: &'a GuardrailConfig, memory: bool, seed: u64) -> SessionParams<'a> {
    SessionParams {
        profile,
        spec,
        variant: Variant::Control,
        trial: 0,
        agent_index: 0,
        seed,
        guardrails: g,
        memory_enabled: memory,
    }
}

#[test]
fn memory_view_follows_the_memory_flag() {
    let spec = store(0.5, 0.5);
    let prof = profile("mugs", PriceTier::MidRange, ExplorationRegime::Moderate);
    let obs = observe(&spec, PageState::home(), 0);
    assert!(assemble_context(&prof, &[], &obs, true, 0).memory_view.is_empty());
    let mem: Vec<MemoryEntry> = (0..5).map(|i| entry(i, "/", Action::click(1))).collect();
    let obs5 = observe(&spec, PageState::home(), 5);
    assert!(assemble_context(&prof, &mem, &obs5, false, 0).memory_view.is_empty());
    let ctx = assemble_context(&prof, &mem, &obs5, true, 0);
    assert_eq!(ctx.memory_view.len(), 5);
    assert!(ctx.memory_view.iter().enumerate().all(|(i, m)| m.step_index == i));
    assert!(ctx.goal.contains("mugs"));
    assert_eq!(ctx.guardrail_notice, GUARDRAIL_NOTICE);
}

#[test]
fn profile_modes_strip_components() {
    let p = persona("p1", 0, 10, "mugs", archetype(PriceTier::Premium, ExplorationRegime::Deep));
    let full = AgentProfile::from_persona(&p, PersonaMode::FullPersona);
    assert!(full.archetype.is_some() && full.guide.is_some());
    assert_eq!(full.prompt, p.prompt);
    let intent = AgentProfile::from_persona(&p, PersonaMode::IntentOnly);
    assert!(intent.archetype.is_none() && intent.guide.is_some());
    assert!(!intent.prompt.contains("Shopping Profile"));
    let only = AgentProfile::from_persona(&p, PersonaMode::ProductOnly);
    assert!(only.archetype.is_none() && only.guide.is_none());
    assert!(only.prompt.contains("mugs"));
    assert!(!only.prompt.contains(PURCHASE_DECISION_GUIDE));
}

#[test]
fn heuristic_rejects_cheap_low_quality_for_premium_buyer() {
    let spec = store(0.0, 0.0);
    let prof = profile("mugs", PriceTier::Premium, ExplorationRegime::Deep);
    let obs = observe(&spec, PageState::product("cheap-mug"), 1);
    let mem = [entry(0, "/collections/mugs", Action::click(9))];
    let policy = HeuristicPolicy::default();
    let ctx = assemble_context(&prof, &mem, &obs, true, 3);
    let view = ProductView::read(&obs.ax_tree, "cheap-mug").unwrap();
    assert!(policy.utility(&ctx, &view) < policy.weights.threshold);
    let d = policy.decide(&ctx).unwrap();
    let kind = d.action.unwrap().kind;
    assert!(matches!(kind, ActionKind::GoBack | ActionKind::Navigate), "{kind:?}");
}

#[test]
fn heuristic_buys_matching_premium_product_with_trust() {
    let spec = store(1.0, 1.0);
    let prof = profile("mugs", PriceTier::Premium, ExplorationRegime::Deep);
    let obs = observe(&spec, PageState::product("fine-mug"), 1);
    let policy = HeuristicPolicy::default();
    for seed in 0..20 {
        let ctx = assemble_context(&prof, &[], &obs, true, seed);
        let d = policy.decide(&ctx).unwrap();
        assert_eq!(d.action.as_ref().map(|a| a.kind), Some(ActionKind::AddToCart), "{d:?}");
    }
}

#[test]
fn heuristic_reads_the_product_page() {
    let spec = store(0.75, 0.9);
    let obs = observe(&spec, PageState::product("fine-mug"), 0);
    let v = ProductView::read(&obs.ax_tree, "fine-mug").unwrap();
    assert_eq!(v.name, "Artisan Mug");
    assert_eq!(v.price, 60.0);
    assert!((v.quality - 0.95).abs() < 1e-9);
    assert_eq!(v.trust, 0.75);
    assert_eq!(v.image, 0.85);
    assert_eq!(v.keywords, vec!["handcrafted".to_string()]);
    let mut related = v.related_prices.clone();
    related.sort_by(f64::total_cmp);
    assert_eq!(related, vec![5.0, 30.0]);
    assert!((v.relative_price() - 2.0).abs() < 1e-9);
}

#[test]
fn heuristic_stops_when_exploration_budget_is_spent() {
    let spec = store(0.0, 0.0);
    let prof = profile("teapots", PriceTier::MidRange, ExplorationRegime::Shallow);
    let mem: Vec<MemoryEntry> = ["cheap-mug", "fine-mug", "mid-mug"]
        .iter()
        .enumerate()
        .map(|(i, r)| entry(i, &format!("/products/{r}"), Action::go_back()))
        .collect();
    let obs = observe(&spec, PageState::home(), 3);
    let d = HeuristicPolicy::default().decide(&assemble_context(&prof, &mem, &obs, true, 0)).unwrap();
    assert!(d.terminate);
    assert!(d.validate().is_ok());
}

#[test]
fn product_only_mode_buys_on_sight() {
    let spec = store(0.0, 0.0);
    let p = persona("p1", 0, 10, "mugs", archetype(PriceTier::Premium, ExplorationRegime::Deep));
    let prof = AgentProfile::from_persona(&p, PersonaMode::ProductOnly);
    let obs = observe(&spec, PageState::product("cheap-mug"), 0);
    let d = HeuristicPolicy::default().decide(&assemble_context(&prof, &[], &obs, true, 0)).unwrap();
    assert_eq!(d.action.unwrap().kind, ActionKind::AddToCart);
}

#[test]
fn loop_detection_examples() {
    let same = |url: &str| {
        let mut e = entry(0, url, Action::click(7));
        e.outcome = Outcome::ExecutionError;
        e.error_detail = Some("no element 7".into());
        e
    };
    assert!(!detect_loop(&[same("/"), same("/")], 3));
    assert!(detect_loop(&[same("/"), same("/"), same("/")], 3));
    assert!(!detect_loop(&[same("/"), same("/cart"), same("/")], 3));
    let mut differ = vec![same("/"), same("/")];
    differ.push(entry(2, "/", Action::click(8)));
    assert!(!detect_loop(&differ, 3));
}

#[test]
fn null_store_terminates_without_purchase() {
    let spec = StoreSpec {
        products: vec![product("only", "Desk Lamp", "lamps", 40.0, 0.5, &[])],
        collections: vec![],
        variant_params: VariantParams {
            featured_products: vec!["only".into()],
            ..store(0.5, 0.5).variant_params
        },
        ..store(0.5, 0.5)
    };
    let prof = profile("teapots", PriceTier::MidRange, ExplorationRegime::Shallow);
    let g = GuardrailConfig::default();
    let log = run_session(&HeuristicPolicy::default(), &params(&prof, &spec, &g, true, 1));
    assert!(!log.a2c);
    assert_eq!(log.termination_reason, TerminationReason::PolicyTerminate);
    assert!(log.steps.len() <= g.max_steps);
}

#[test]
fn adversarial_store_trips_the_loop_guard() {
    let spec = adversarial_store();
    let prof = profile("teapots", PriceTier::MidRange, ExplorationRegime::Deep);
    let g = GuardrailConfig::default();
    for memory in [false, true] {
        let log = run_session(&HeuristicPolicy::default(), &params(&prof, &spec, &g, memory, 2));
        assert_eq!(log.termination_reason, TerminationReason::LoopGuardrail, "memory={memory}");
        assert!(log.steps.len() <= g.loop_window + 2);
    }
}

#[test]
fn one_step_budget() {
    let spec = store(0.5, 0.5);
    let prof = profile("mugs", PriceTier::MidRange, ExplorationRegime::Moderate);
    let g = GuardrailConfig {
        max_steps: 1,
        ..GuardrailConfig::default()
    };
    let log = run_session(&HeuristicPolicy::default(), &params(&prof, &spec, &g, true, 0));
    assert_eq!(log.steps.len(), 1);
    assert!(matches!(
        log.termination_reason,
        TerminationReason::PolicyTerminate | TerminationReason::StepBudget
    ));
}

/// Clicks a missing element, then records what it is shown next.
struct Probe {
    seen: Mutex<Vec<Vec<MemoryEntry>>>,
}

impl DecisionPolicy for Probe {
    fn decide(&self, ctx: &PlanningContext<'_>) -> Result<Decision, PolicyError> {
        let mut seen = self.seen.lock().unwrap();
        seen.push(ctx.memory_view.to_vec());
        Ok(if seen.len() == 1 {
            Decision::act(Action::click(999), "probe")
        } else {
            Decision::stop("done")
        })
    }
}

#[test]
fn execution_errors_reach_the_next_context() {
    let spec = store(0.5, 0.5);
    let prof = profile("mugs", PriceTier::MidRange, ExplorationRegime::Moderate);
    let g = GuardrailConfig::default();
    let probe = Probe { seen: Mutex::new(vec![]) };
    let log = run_session(&probe, &params(&prof, &spec, &g, true, 0));
    assert_eq!(log.steps[0].outcome, Outcome::ExecutionError);
    let seen = probe.seen.lock().unwrap();
    assert_eq!(seen[1].len(), 1);
    assert!(seen[1][0].error_detail.is_some());
    assert_eq!(log.termination_reason, TerminationReason::PolicyTerminate);
}

struct Failing;

impl DecisionPolicy for Failing {
    fn decide(&self, _: &PlanningContext<'_>) -> Result<Decision, PolicyError> {
        Err(PolicyError::Failure {
            attempts: 3,
            last: "bad json".into(),
        })
    }
}

#[test]
fn policy_failure_ends_the_session() {
    let spec = store(0.5, 0.5);
    let prof = profile("mugs", PriceTier::MidRange, ExplorationRegime::Moderate);
    let g = GuardrailConfig::default();
    let log = run_session(&Failing, &params(&prof, &spec, &g, true, 0));
    assert_eq!(log.termination_reason, TerminationReason::RetryExhausted);
    assert!(log.steps.is_empty());
}

/// Repeats one action forever.
struct Stuck(Action);

impl DecisionPolicy for Stuck {
    fn decide(&self, _: &PlanningContext<'_>) -> Result<Decision, PolicyError> {
        Ok(Decision::act(self.0.clone(), "again"))
    }
}

fn any_action() -> impl Strategy<Value = Action> {
    prop_oneof![
        (1u32..40).prop_map(Action::click),
        (1u32..40).prop_map(Action::add_to_cart),
        Just(Action::go_back()),
        Just(Action::navigate("/collections/mugs")),
        Just(Action::search("mug")),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn every_session_halts_within_budget(
        action in any_action(),
        max_steps in 1usize..40,
        window in 2usize..6,
        memory in any::<bool>(),
        seed in any::<u64>(),
    ) {
        let spec = store(0.5, 0.5);
        let prof = profile("mugs", PriceTier::MidRange, ExplorationRegime::Moderate);
        let g = GuardrailConfig { max_steps, loop_window: window, ..GuardrailConfig::default() };
        let log = run_session(&Stuck(action), &params(&prof, &spec, &g, memory, seed));
        prop_assert!(log.steps.len() <= max_steps);
        prop_assert!(log.steps.iter().enumerate().all(|(i, s)| s.step_index == i));
    }

    #[test]
    fn a2c_flag_matches_replayed_events(seed in any::<u64>(), trust in 0.0f64..1.0, target in prop::sample::select(vec!["mugs", "lamps", "teapots"])) {
        let spec = store(trust, 0.9);
        let prof = profile(target, PriceTier::MidRange, ExplorationRegime::Deep);
        let g = GuardrailConfig::default();
        let log = run_session(&HeuristicPolicy::default(), &params(&prof, &spec, &g, true, seed));
        let session = log.to_session();
        prop_assert_eq!(log.a2c, session.has_a2c());
        prop_assert!(session.events.windows(2).all(|w| w[0].ts_ms <= w[1].ts_ms));
    }
}

#[test]
fn replay_parses_as_a_clickstream() {
    let spec = store(1.0, 1.0);
    let prof = profile("mugs", PriceTier::Premium, ExplorationRegime::Deep);
    let g = GuardrailConfig::default();
    let log = run_session(&HeuristicPolicy::default(), &params(&prof, &spec, &g, true, 5));
    assert!(log.a2c);
    let mut buf = Vec::new();
    crate::clickstream::write_clickstream(&mut buf, &[log.to_session()]).unwrap();
    let back = crate::clickstream::parse_clickstream(&buf[..]).unwrap();
    assert_eq!(back, vec![log.to_session()]);
}

fn cohort_personas() -> Vec<Persona> {
    let mut out = Vec::new();
    for (c, mass, target) in [(0, 300, "mugs"), (1, 100, "lamps")] {
        for j in 0..3 {
            out.push(persona(
                &format!("shop-c{c}-{j:04}"),
                c,
                mass,
                target,
                archetype(PriceTier::MidRange, ExplorationRegime::Moderate),
            ));
        }
    }
    out
}

#[test]
fn agents_follow_cluster_mass() {
    let ps = cohort_personas();
    let slots = allocate_agents(&ps, 8);
    assert_eq!(slots.len(), 8);
    assert_eq!(slots.iter().filter(|s| s.persona.cluster_id == 0).count(), 6);
    assert!(slots.iter().enumerate().all(|(i, s)| s.agent_index == i));
    assert_eq!(slots[3].replica, 1);
}

#[test]
fn cohort_sizes_and_determinism() {
    let ps = cohort_personas();
    let policy = HeuristicPolicy::default();
    let (c, t) = (store(0.25, 0.3), store(1.0, 1.0));
    let small = CohortConfig {
        agents_per_shop: 1,
        trials: 1,
        ..CohortConfig::default()
    };
    assert_eq!(run_cohort(&ps, &c, &t, &policy, &small).len(), 2);
    let cfg = CohortConfig {
        master_seed: 11,
        ..CohortConfig::default()
    };
    let a = run_cohort(&ps, &c, &t, &policy, &cfg);
    assert_eq!(a.len(), 2400);
    assert_eq!(a, run_cohort(&ps, &c, &t, &policy, &cfg));
    let rate = |v: Variant| a.iter().filter(|l| l.variant == v && l.a2c).count();
    assert!(rate(Variant::Treatment) > rate(Variant::Control));
}
