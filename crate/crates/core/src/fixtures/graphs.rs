//! Seeded random single-site worlds and episodes over them.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::env::{Affordance, EnvError, Mutation, PageSpec, SiteFile, TaskFile, ValidatorFile, ValidatorKind, World, WorldFile, WORLD_SCHEMA};
use crate::model::{Action, ActionKind, Element, Query, Step, Trajectory};

pub const SITE: &str = "g";

pub fn locator(i: usize) -> String {
    if i == 0 {
        "/".to_string()
    } else {
        format!("/p{i}")
    }
}

/// A random site of `pages` pages: a random spanning tree from the root
/// plus `extra` additional links, notes of random length, and a text input
/// on roughly every third page. One task targets a random page.
pub fn random_world(seed: u64, pages: usize, extra: usize) -> WorldFile {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pages = pages.max(2);
    let mut links: Vec<Vec<usize>> = vec![Vec::new(); pages];
    for i in 1..pages {
        let parent = rng.gen_range(0..i);
        links[parent].push(i);
    }
    for _ in 0..extra {
        let a = rng.gen_range(0..pages);
        let b = rng.gen_range(0..pages);
        if a != b && !links[a].contains(&b) {
            links[a].push(b);
        }
    }
    let specs = (0..pages)
        .map(|i| {
            let mut elements = vec![Element::new("title", "heading", format!("Page {i}"))];
            let mut affordances = Vec::new();
            for n in 0..rng.gen_range(0..4) {
                elements.push(Element::new(format!("note{n}"), "text", format!("note {n} of page {i}: {}", rng.gen::<u16>())));
            }
            if i % 3 == 1 {
                elements.push(Element::new("q", "input", ""));
                affordances.push(Affordance {
                    action_kind: ActionKind::Type,
                    element_id: "q".into(),
                    dest: None,
                    mutation: Some(Mutation::SetText),
                });
            }
            let mut outs = links[i].clone();
            outs.shuffle(&mut rng);
            for j in outs {
                let id = format!("to-{j}");
                elements.push(Element::new(id.clone(), "link", format!("Go to page {j}")));
                affordances.push(Affordance {
                    action_kind: ActionKind::Click,
                    element_id: id,
                    dest: Some(locator(j)),
                    mutation: None,
                });
            }
            PageSpec {
                locator: locator(i),
                elements,
                affordances,
            }
        })
        .collect();
    let target = locator(rng.gen_range(1..pages));
    WorldFile {
        schema: WORLD_SCHEMA,
        name: Some(format!("random-{seed}")),
        sites: vec![SiteFile {
            site_id: SITE.into(),
            root: "/".into(),
            pages: specs,
        }],
        tasks: vec![TaskFile {
            query: Query::new("reach", format!("open {target}"), SITE).expect("valid query"),
            key_obs: vec![target.clone()],
            validator: ValidatorFile {
                kind: ValidatorKind::StateReached,
                expected: target,
            },
        }],
    }
}

/// A walk of `len` actions that clicks a random link or, on pages with an
/// input, sometimes types a random word into it first.
pub fn random_episode<R: Rng>(world: &World, len: usize, rng: &mut R, id: &str) -> Result<Trajectory, EnvError> {
    let (mut state, start) = world.reset(SITE)?;
    let mut traj = Trajectory::new(id, SITE, start);
    let site = world.site(SITE)?;
    for _ in 0..len {
        let page = &site.pages[&state.locator];
        let typing: Vec<&Affordance> = page.affordances.iter().filter(|a| a.mutation.is_some()).collect();
        let clicks: Vec<&Affordance> = page.affordances.iter().filter(|a| a.dest.is_some()).collect();
        let action = if !typing.is_empty() && rng.gen_bool(0.3) {
            let words = ["red", "blue", "green", "orders", "hits"];
            Action::type_text(&typing[0].element_id, *words.choose(rng).expect("non-empty")).expect("valid action")
        } else if let Some(a) = clicks.choose(rng) {
            Action::click(&a.element_id)
        } else {
            break;
        };
        let (next, obs) = world.step(&state, &action)?;
        traj.steps.push(Step {
            action,
            observation: obs,
        });
        state = next;
    }
    Ok(traj)
}
