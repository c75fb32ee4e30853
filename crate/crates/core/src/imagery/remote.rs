use std::sync::Arc;
use std::thread;
use std::time::Duration;

use tracing::debug;

use super::{ImageTile, ImageryError, ImageryProvider, ProviderKind};
use crate::geo::TileRef;
use crate::http::Transport;

/// Static-map style HTTP provider.
pub struct RemoteProvider {
    template: String,
    key: String,
    transport: Arc<dyn Transport>,
    max_retries: u32,
    backoff: Duration,
}

impl RemoteProvider {
    pub fn new(template: impl Into<String>, key: impl Into<String>, transport: Arc<dyn Transport>) -> Self {
        Self {
            template: template.into(),
            key: key.into(),
            transport,
            max_retries: 3,
            backoff: Duration::from_millis(250),
        }
    }

    pub fn with_retries(mut self, max_retries: u32, backoff: Duration) -> Self {
        self.max_retries = max_retries;
        self.backoff = backoff;
        self
    }

    pub fn url_for(&self, t: &TileRef) -> String {
        self.template
            .replace("{lat}", &t.center.lat_deg.to_string())
            .replace("{lon}", &t.center.lon_deg.to_string())
            .replace("{zoom}", &t.zoom.to_string())
            .replace("{w}", &t.width_px.to_string())
            .replace("{h}", &t.height_px.to_string())
            .replace("{key}", &self.key)
    }
}

impl ImageryProvider for RemoteProvider {
    fn kind(&self) -> ProviderKind {
        ProviderKind::Remote
    }

    fn fetch(&self, tile: &TileRef) -> Result<ImageTile, ImageryError> {
        let url = self.url_for(tile);
        let mut last = String::new();
        let attempts = self.max_retries + 1;
        for attempt in 0..attempts {
            if attempt > 0 {
                thread::sleep(self.backoff * 2u32.saturating_pow(attempt - 1));
            }
            match self.transport.get(&url) {
                Ok(res) if res.is_success() => {
                    return ImageTile::decode(tile.clone(), &res.body, ProviderKind::Remote);
                }
                // 429 and 5xx are worth another try; other statuses are final.
                Ok(res) if res.status == 429 || res.status >= 500 => {
                    last = format!("HTTP {}", res.status);
                }
                Ok(res) => {
                    return Err(ImageryError::Transport {
                        attempts: attempt + 1,
                        message: format!("HTTP {}", res.status),
                    });
                }
                Err(e) => last = e.to_string(),
            }
            debug!(tile = %tile.tile_id, attempt, error = %last, "imagery fetch failed");
        }
        Err(ImageryError::Transport { attempts, message: last })
    }
}
