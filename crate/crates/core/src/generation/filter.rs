use crate::corpus::TagId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct FilterSet {
    /// Drop tokens equal to either current neighbor.
    pub adjacent_duplicate: bool,
    /// Drop subword affixes whose body is shorter than this many characters.
    pub short_affix: Option<usize>,
    /// Drop the model's unknown token.
    pub unknown_token: bool,
}

pub const DEFAULT_MIN_AFFIX_LEN: usize = 3;

impl FilterSet {
    pub fn all() -> Self {
        Self {
            adjacent_duplicate: true,
            short_affix: Some(DEFAULT_MIN_AFFIX_LEN),
            unknown_token: true,
        }
    }

    pub fn none() -> Self {
        Self {
            adjacent_duplicate: false,
            short_affix: None,
            unknown_token: false,
        }
    }
}

impl Default for FilterSet {
    fn default() -> Self {
        Self::all()
    }
}

/// What the filters need to know about a vocabulary beyond its size. Tag
/// alphabets have neither surface forms nor an unknown token.
#[derive(Debug, Clone, Copy, Default)]
pub struct TokenInfo<'a> {
    pub surfaces: Option<&'a [String]>,
    pub unknown: Option<TagId>,
}

impl TokenInfo<'_> {
    pub fn tags() -> Self {
        Self::default()
    }
}

/// WordPiece suffix pieces (`##ing`) and subword-nmt prefix pieces (`re@@`).
fn affix_body(surface: &str) -> Option<&str> {
    surface
        .strip_prefix("##")
        .or_else(|| surface.strip_suffix("@@"))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Filtered {
    pub dist: Vec<f64>,
    /// Every outcome was filtered out and `dist` is the unfiltered input.
    pub fallback: bool,
}

pub fn filter_distribution(
    dist: &[f64],
    position: usize,
    current_seq: &[TagId],
    filters: &FilterSet,
    tokens: &TokenInfo<'_>,
) -> Filtered {
    let mut out = dist.to_vec();
    if filters.adjacent_duplicate {
        let left = position.checked_sub(1).and_then(|i| current_seq.get(i));
        let right = current_seq.get(position + 1);
        for &n in left.into_iter().chain(right) {
            if let Some(p) = out.get_mut(n as usize) {
                *p = 0.0;
            }
        }
    }
    if let (Some(min_len), Some(surfaces)) = (filters.short_affix, tokens.surfaces) {
        for (p, s) in out.iter_mut().zip(surfaces) {
            if affix_body(s).is_some_and(|b| b.chars().count() < min_len) {
                *p = 0.0;
            }
        }
    }
    if filters.unknown_token {
        if let Some(p) = tokens.unknown.and_then(|u| out.get_mut(u as usize)) {
            *p = 0.0;
        }
    }
    let mass: f64 = out.iter().sum();
    if mass > 0.0 {
        out.iter_mut().for_each(|p| *p /= mass);
        Filtered {
            dist: out,
            fallback: false,
        }
    } else {
        Filtered {
            dist: dist.to_vec(),
            fallback: true,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MASK: TagId = 2;

    #[test]
    fn removes_neighbors() {
        let f = filter_distribution(&[0.5, 0.5], 1, &[1, MASK, 1], &FilterSet::all(), &TokenInfo::tags());
        assert_eq!(f.dist, vec![1.0, 0.0]);
        assert!(!f.fallback);
    }

    #[test]
    fn all_mass_removed_falls_back() {
        let f = filter_distribution(&[0.0, 1.0], 0, &[MASK, 1], &FilterSet::all(), &TokenInfo::tags());
        assert_eq!(f.dist, vec![0.0, 1.0]);
        assert!(f.fallback);
    }

    #[test]
    fn affix_and_unknown_rules_inert_for_tags() {
        let d = [0.2, 0.3, 0.5];
        let filters = FilterSet {
            adjacent_duplicate: false,
            ..FilterSet::all()
        };
        let f = filter_distribution(&d, 0, &[3, 3, 3], &filters, &TokenInfo::tags());
        assert_eq!(f.dist, d.to_vec());
        assert!(!f.fallback);
    }

    #[test]
    fn token_vocabulary_rules() {
        let surfaces: Vec<String> = ["the", "##s", "##ing", "re@@", "[UNK]"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let info = TokenInfo {
            surfaces: Some(&surfaces),
            unknown: Some(4),
        };
        let d = [0.2; 5];
        let filters = FilterSet {
            adjacent_duplicate: false,
            ..FilterSet::all()
        };
        let f = filter_distribution(&d, 0, &[5, 5], &filters, &info);
        // "##s" and "re@@" are short affixes; "##ing" has a 3-char body.
        assert_eq!(f.dist, vec![0.5, 0.0, 0.5, 0.0, 0.0]);
        let f = filter_distribution(&d, 0, &[5, 5], &FilterSet::none(), &info);
        assert_eq!(f.dist, d.to_vec());
    }
}
