@app.route('/puppet/default', methods=['GET', 'POST'])
@cortex.lib.user.login_required
def puppet_enc_default():
  """Handles the Puppet ENC Default Classes page"""

  # Check user permissions
  if not does_user_have_permission("puppet.default_classes.view"):
    abort(403)

  # Get the default YAML out of the kv table
  curd = g.db.cursor(mysql.cursors.DictCursor)
  curd.execute("SELECT `value` FROM `kv_settings` WHERE `key` = 'puppet.enc.default'")
  result = curd.fetchone()
  if result == None:
    classes = "# Classes to include on all nodes using the default settings can be entered here\n"
  else:
    classes = result['value']

  # On any GET request, just display the information
  if request.method == 'GET':
    return render_template('puppet/default.html', classes=classes, active='puppet', title="Default Classes")

  # On any POST request, validate the input and then save
  elif request.method == 'POST':
    # Check user permissions
    if not does_user_have_permission("puppet.default_classes.edit"):
      abort(403)

    # Extract data from form
    classes = request.form.get('classes', '')

    # Validate classes YAML
    try:
      data = yaml.safe_load(classes)
    except Exception as e:
      flash('Invalid YAML syntax: ' + str(e), 'alert-danger')
      return render_template('puppet/default.html', classes=classes, active='puppet', title="Default Classes")

    try:
      if not data is None:
        assert isinstance(data, dict)
    except Exception as e:
      flash('Invalid YAML syntax: result was not a list of classes, did you forget a trailing colon? ' + str(e), 'alert-danger')
      return render_template('puppet/default.html', classes=classes, active='puppet', title="Default Classes")

    # Get a cursor to the database
    # Update the system
    curd.execute('REPLACE INTO `kv_settings` (`key`, `value`) VALUES ("puppet.enc.default", %s)', (classes,))
    g.db.commit()

    cortex.lib.core.log(__name__, "puppet.defaultconfig.changed", "Puppet default configuration updated")
    # Redirect back
    flash('Puppet default settings updated', 'alert-success')

    return redirect(url_for('puppet_enc_default'))
