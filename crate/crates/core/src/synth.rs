//! Seeded generators for synthetic layouts, actions and episodes.
//!
//! Used by the test suites and by `coco synth` to produce fixture datasets
//! of any size. Every refactored verb is reachable: dual-point gestures are
//! drawn to land inside an item (click), on empty screen (tap) or to travel
//! past the swipe threshold (scroll).

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cap::{CapConfig, Direction, Verb};
use crate::model::{
    ActionType, BoundingBox, CanonicalAction, Episode, LayoutItem, Point, ScreenObservation, Step,
};

const NAMES: [&str; 16] = [
    "Search",
    "Settings",
    "abcnews.go.Com",
    "Chile | Today's latest from Al",
    "ICON_MAGNIFYING_GLASS",
    "Maps",
    "Wi-Fi, Bluetooth",
    "OK",
    "Cancel",
    "Add to cart",
    "\"Quoted\" label",
    "ICON_HOME",
    "Price: $12.99",
    "Réglages",
    "Sign in",
    "ICON_THREE_DOTS",
];

const WORDS: [&str; 14] = [
    "news", "chile", "weather", "new", "york", "city", "\"best\"", "pizza", "near", "me,", "café",
    "80%", "hotel", "flights",
];

const GRID: usize = 4;

/// Items placed in distinct cells of a 4x4 grid, so boxes never overlap and
/// the gaps between cells are empty screen.
pub fn random_layout(rng: &mut impl Rng, max_items: usize) -> Vec<LayoutItem> {
    let mut cells: Vec<usize> = (0..GRID * GRID).collect();
    cells.shuffle(rng);
    let n = rng.gen_range(0..=max_items.min(GRID * GRID));
    let cell = 1.0 / GRID as f64;
    cells[..n]
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let (row, col) = ((c / GRID) as f64, (c % GRID) as f64);
            let h = rng.gen_range(0.03..0.4) * cell;
            let w = rng.gen_range(0.03..0.4) * cell;
            let cy = (row + 0.5) * cell + rng.gen_range(-0.05..0.05) * cell;
            let cx = (col + 0.5) * cell + rng.gen_range(-0.05..0.05) * cell;
            let name = format!("{} {i}", NAMES.choose(rng).unwrap_or(&"item"));
            if rng.gen_bool(0.25) {
                LayoutItem::at(name, Point::new(cy, cx))
            } else {
                LayoutItem::with_bbox(name, BoundingBox::new(cy - h, cx - w, cy + h, cx + w))
            }
        })
        .collect()
}

pub fn random_text(rng: &mut impl Rng) -> String {
    let n = rng.gen_range(0..5);
    (0..n)
        .map(|_| *WORDS.choose(rng).unwrap_or(&"x"))
        .collect::<Vec<_>>()
        .join(" ")
}

fn random_point(rng: &mut impl Rng) -> Point {
    Point::new(rng.gen_range(0.0..=1.0), rng.gen_range(0.0..=1.0))
}

fn empty_point(rng: &mut impl Rng, layout: &[LayoutItem]) -> Option<Point> {
    (0..200).map(|_| random_point(rng)).find(|p| {
        layout
            .iter()
            .all(|i| !i.bbox.is_some_and(|b| b.contains(p)))
    })
}

fn swipe(rng: &mut impl Rng, cfg: &CapConfig) -> (Point, Point) {
    loop {
        let touch = random_point(rng);
        let lift = random_point(rng);
        if touch.distance(&lift) > cfg.swipe_threshold {
            return (touch, lift);
        }
    }
}

/// A gesture that stays within the threshold and ends near `touch`.
fn press(rng: &mut impl Rng, touch: Point, cfg: &CapConfig) -> Point {
    let r = rng.gen_range(0.0..cfg.swipe_threshold * 0.9);
    let a = rng.gen_range(0.0..std::f64::consts::TAU);
    Point::new(
        (touch.y + r * a.sin()).clamp(0.0, 1.0),
        (touch.x + r * a.cos()).clamp(0.0, 1.0),
    )
}

/// A valid canonical action that refactors to `verb` on `layout`, or `None`
/// when the layout cannot host it (a click on an empty screen).
pub fn action_for_verb(
    rng: &mut impl Rng,
    verb: Verb,
    layout: &[LayoutItem],
    cfg: &CapConfig,
) -> Option<CanonicalAction> {
    Some(match verb {
        Verb::PressHome => CanonicalAction::simple(ActionType::PressHome),
        Verb::PressBack => CanonicalAction::simple(ActionType::PressBack),
        Verb::PressEnter => CanonicalAction::simple(ActionType::PressEnter),
        Verb::StatusTaskComplete => CanonicalAction::simple(ActionType::StatusTaskComplete),
        Verb::Type => CanonicalAction::type_text(random_text(rng)),
        Verb::Scroll => {
            let (t, l) = swipe(rng, cfg);
            CanonicalAction::dual_point(t, l)
        }
        Verb::Click => {
            let item = layout.choose(rng)?;
            let b = item.bbox?;
            let touch = Point::new(
                rng.gen_range(b.y_min..=b.y_max),
                rng.gen_range(b.x_min..=b.x_max),
            );
            // Lift anywhere within the threshold; only the touch point decides.
            CanonicalAction::dual_point(touch, press(rng, touch, cfg))
        }
        Verb::Tap => {
            let touch = empty_point(rng, layout)?;
            CanonicalAction::dual_point(touch, press(rng, touch, cfg))
        }
    })
}

/// Uniform over the eight verbs, retrying verbs the layout cannot host.
pub fn random_action(
    rng: &mut impl Rng,
    layout: &[LayoutItem],
    cfg: &CapConfig,
) -> (Verb, CanonicalAction) {
    loop {
        let verb = Verb::ALL[rng.gen_range(0..Verb::ALL.len())];
        if let Some(a) = action_for_verb(rng, verb, layout, cfg) {
            return (verb, a);
        }
    }
}

/// `n` (layout, verb, action) triples cycling through the eight verbs, so
/// every verb gets `n / 8` cases.
pub fn codec_corpus(
    seed: u64,
    n: usize,
    cfg: &CapConfig,
) -> Vec<(Vec<LayoutItem>, Verb, CanonicalAction)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let verb = Verb::ALL[i % Verb::ALL.len()];
            loop {
                let layout = random_layout(&mut rng, 10);
                if let Some(a) = action_for_verb(&mut rng, verb, &layout, cfg) {
                    break (layout, verb, a);
                }
            }
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct SynthSpec {
    pub seed: u64,
    pub episodes: usize,
    pub min_steps: usize,
    pub max_steps: usize,
    pub subsets: Vec<String>,
    /// Give every step an agent utterance, META-GUI style.
    pub utterances: bool,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            seed: 0,
            episodes: 50,
            min_steps: 3,
            max_steps: 12,
            subsets: vec!["general".into()],
            utterances: false,
        }
    }
}

const GOALS: [&str; 6] = [
    "What's the news in Chile?",
    "Open the settings and turn on wifi",
    "Search for a hotel in new york city",
    "Add pizza to the cart",
    "Check the weather for tomorrow",
    "Book flights to Paris",
];

const UTTERANCES: [&str; 4] = [
    "Which date would you like to book?",
    "I found three hotels near you.",
    "Is this the right page?",
    "Done, anything else I can help with?",
];

pub fn synthetic_dataset(spec: &SynthSpec, cfg: &CapConfig) -> Vec<Episode> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    (0..spec.episodes)
        .map(|e| {
            let n = rng.gen_range(spec.min_steps..=spec.max_steps.max(spec.min_steps));
            let subset = spec.subsets[e % spec.subsets.len().max(1)].clone();
            let steps = (0..n)
                .map(|t| {
                    let layout = random_layout(&mut rng, 8);
                    let (_, action) = random_action(&mut rng, &layout, cfg);
                    let mut step = Step::new(
                        ScreenObservation {
                            image_ref: format!("screens/{e:05}_{t:02}.png"),
                            layout,
                        },
                        action,
                    );
                    if spec.utterances {
                        step.agent_utterance =
                            Some(UTTERANCES.choose(&mut rng).unwrap_or(&"ok").to_string());
                        step.user_utterance = Some(random_text(&mut rng));
                    }
                    step
                })
                .collect();
            Episode {
                id: format!("{subset}-{e:05}"),
                goal: format!("{} ({e})", GOALS.choose(&mut rng).unwrap_or(&"do it")),
                subset,
                steps,
            }
        })
        .collect()
}

/// All four scroll directions with a fixed swipe, for direction checks.
pub fn scroll_gestures() -> Vec<(Direction, CanonicalAction)> {
    Direction::ALL
        .into_iter()
        .map(|d| {
            let (t, l) = d.anchors();
            (d, CanonicalAction::dual_point(t, l))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cap;
    use crate::model::validate_episode;

    #[test]
    fn every_verb_is_generated_as_asked() {
        let cfg = CapConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..500 {
            let layout = random_layout(&mut rng, 8);
            for verb in Verb::ALL {
                if let Some(a) = action_for_verb(&mut rng, verb, &layout, &cfg) {
                    assert!(a.is_valid());
                    assert_eq!(
                        cap::refactor(&a, &layout, &cfg).unwrap().verb(),
                        verb,
                        "{a:?}"
                    );
                }
            }
        }
    }

    #[test]
    fn dataset_is_valid_and_seeded() {
        let cfg = CapConfig::default();
        let spec = SynthSpec {
            episodes: 20,
            utterances: true,
            ..SynthSpec::default()
        };
        let a = synthetic_dataset(&spec, &cfg);
        assert_eq!(a, synthetic_dataset(&spec, &cfg));
        for ep in &a {
            assert!(
                validate_episode(ep).is_empty(),
                "{:?}",
                validate_episode(ep)
            );
        }
    }
}
