import { ApiClient } from './api.js';
import { ReviewApp } from './app.js';

const root = document.getElementById('app');
if (root === null) {
  throw new Error('missing #app mount point');
}
const app = new ReviewApp(root, new ApiClient());
void app.start();
